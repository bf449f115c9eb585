//! `report.json` / `report.csv` output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{io_error, Error, Result};

pub const JSON_NAME: &str = "report.json";
pub const CSV_NAME: &str = "report.csv";

/// A result that can be written as JSON plus a flat CSV table.
pub trait Report: Serialize {
    fn csv_header(&self) -> Vec<String>;
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn is_empty(&self) -> bool {
        self.csv_rows().is_empty()
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_path(path);
    fs::write(&tmp, bytes).map_err(io_error(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_error(path)(e)
    })
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    text.push('\n');
    text
}

pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_error = |source| Error::Csv { path: PathBuf::from("<report>"), source };
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
}

/// Writes `report.json` and `report.csv` into `out_dir` (created if needed).
///
/// Both files are rendered before anything touches the disk, so an empty or
/// unrenderable report leaves no files behind.
pub fn emit_report<R: Report>(report: &R, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if report.is_empty() {
        return Err(Error::EmptyReport);
    }
    let json = to_json(report);
    let csv = to_csv(&report.csv_header(), &report.csv_rows())?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let json_path = out_dir.join(JSON_NAME);
    let csv_path = out_dir.join(CSV_NAME);
    write_atomic(&json_path, json.as_bytes())?;
    if let Err(e) = write_atomic(&csv_path, csv.as_bytes()) {
        let _ = fs::remove_file(&json_path);
        return Err(e);
    }
    Ok(vec![json_path, csv_path])
}

/// Shortest round-tripping decimal, with an exponent for very large or small values.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
