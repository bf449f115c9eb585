//! CSV ingestion: numeric parsing, one-hot encoding of low-cardinality text
//! columns and row filtering.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use hyptree_core::{one_hot_encode, ColumnKind, Dataset};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, Error, Result};

/// Text columns with more distinct levels than this are dropped.
pub const DEFAULT_MAX_LEVELS: usize = 32;

/// Cell contents treated as a missing value (compared case-insensitively after trimming).
const MISSING: [&str; 7] = ["", "na", "n/a", "nan", "null", "none", "?"];

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub target: String,
    pub drop: Vec<String>,
    pub max_levels: usize,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>) -> Self {
        LoadOptions { target: target.into(), drop: Vec::new(), max_levels: DEFAULT_MAX_LEVELS }
    }
}

/// How one model input is derived from a CSV column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Numeric { name: String },
    OneHot { name: String, source: String, level: String },
}

impl FeatureSpec {
    pub fn name(&self) -> &str {
        match self {
            FeatureSpec::Numeric { name } | FeatureSpec::OneHot { name, .. } => name,
        }
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            FeatureSpec::Numeric { .. } => ColumnKind::Numeric,
            FeatureSpec::OneHot { .. } => ColumnKind::OneHot,
        }
    }

    pub fn source(&self) -> &str {
        match self {
            FeatureSpec::Numeric { name } => name,
            FeatureSpec::OneHot { source, .. } => source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedColumn {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// 0-based data-row numbers (header excluded) that were dropped.
    pub dropped_rows: Vec<usize>,
    pub dropped_columns: Vec<DroppedColumn>,
    /// Source column → one-hot levels, in output column order.
    pub encodings: BTreeMap<String, Vec<String>>,
    pub features: Vec<FeatureSpec>,
}

pub fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING.iter().any(|m| t.eq_ignore_ascii_case(m))
}

/// Finite number, or `None` for missing and unparseable cells.
pub fn parse_number(cell: &str) -> Option<f64> {
    if is_missing(cell) {
        return None;
    }
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Table {
    headers: Vec<String>,
    /// Column-major cells.
    columns: Vec<Vec<String>>,
}

fn read_table<R: Read>(reader: R, path: &Path) -> Result<Table> {
    let csv_error = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: missing header row", path.display())));
    }
    let mut seen = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if let Some(first) = seen.insert(h.as_str(), i) {
            return Err(Error::Data(format!("{}: column {h:?} appears twice (positions {first} and {i})", path.display())));
        }
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        for (column, cell) in columns.iter_mut().zip(record.iter()) {
            column.push(cell.to_string());
        }
    }
    Ok(Table { headers, columns })
}

fn column_index(table: &Table, name: &str, path: &Path) -> Result<usize> {
    table
        .headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Data(format!("{}: no column named {name:?}", path.display())))
}

pub fn load_csv(path: impl AsRef<Path>, options: &LoadOptions) -> Result<(Dataset, IngestSummary)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    load_csv_from(file, path, options)
}

/// Like [`load_csv`]; `path` is only used in messages.
pub fn load_csv_from<R: Read>(reader: R, path: &Path, options: &LoadOptions) -> Result<(Dataset, IngestSummary)> {
    let table = read_table(reader, path)?;
    let n = table.columns.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    for name in &options.drop {
        column_index(&table, name, path)?;
    }
    let target_index = column_index(&table, &options.target, path)?;
    let mut target = Vec::with_capacity(n);
    for (row, cell) in table.columns[target_index].iter().enumerate() {
        match parse_number(cell) {
            Some(v) => target.push(v),
            None => {
                return Err(Error::Data(format!(
                    "{}: target column {:?} is not numeric at data row {row}: {cell:?}",
                    path.display(),
                    options.target
                )))
            }
        }
    }

    let mut keep = vec![true; n];
    let mut dropped_columns = Vec::new();
    let mut encodings = BTreeMap::new();
    // (spec, values) in output order
    let mut produced: Vec<(FeatureSpec, Vec<f64>)> = Vec::new();
    for (j, name) in table.headers.iter().enumerate() {
        if j == target_index || options.drop.contains(name) {
            continue;
        }
        let cells = &table.columns[j];
        let numbers: Vec<Option<f64>> = cells.iter().map(|c| parse_number(c)).collect();
        // numeric when most present cells are numbers; the rest are unparseable
        let present = cells.iter().filter(|c| !is_missing(c)).count();
        let parsed = numbers.iter().filter(|v| v.is_some()).count();
        if parsed > 0 && 2 * parsed > present {
            for (k, v) in keep.iter_mut().zip(&numbers) {
                *k &= v.is_some();
            }
            produced.push((FeatureSpec::Numeric { name: name.clone() }, numbers.iter().map(|v| v.unwrap_or(0.0)).collect()));
            continue;
        }
        let levels: Vec<&str> = cells.iter().map(|c| c.trim()).collect();
        let encoded = one_hot_encode(&levels, name);
        if encoded.len() > options.max_levels {
            dropped_columns.push(DroppedColumn {
                name: name.clone(),
                reason: format!("{} distinct text values exceed the cap of {}", encoded.len(), options.max_levels),
            });
            continue;
        }
        encodings.insert(name.clone(), encoded.iter().map(|c| c.level.clone()).collect());
        for column in encoded {
            let spec = FeatureSpec::OneHot { name: column.name, source: name.clone(), level: column.level };
            produced.push((spec, column.values));
        }
    }
    if produced.is_empty() {
        return Err(Error::Data(format!("{}: no usable feature columns", path.display())));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: every row has a missing or unparseable number", path.display())));
    }
    let dropped_rows: Vec<usize> = (0..n).filter(|&i| !keep[i]).collect();
    let (specs, values): (Vec<FeatureSpec>, Vec<Vec<f64>>) = produced.into_iter().unzip();
    let features = values.into_iter().map(|v| rows.iter().map(|&i| v[i]).collect()).collect();
    let kinds = specs.iter().map(FeatureSpec::kind).collect();
    let names = specs.iter().map(|s| s.name().to_string()).collect();
    let dataset = Dataset::new(features, rows.iter().map(|&i| target[i]).collect(), names, kinds)?;
    let summary = IngestSummary {
        rows_read: n,
        rows_kept: rows.len(),
        dropped_rows,
        dropped_columns,
        encodings,
        features: specs,
    };
    Ok((dataset, summary))
}

/// Rebuilds the model inputs described by `features` from a CSV.
///
/// Rows with a missing or unparseable numeric input are skipped; the returned
/// row numbers identify the rows kept. Unseen one-hot levels encode as all
/// zeros. The target column is read when `target` is given, otherwise the
/// dataset target is zero.
pub fn load_for_model(
    path: impl AsRef<Path>,
    features: &[FeatureSpec],
    target: Option<&str>,
) -> Result<(Dataset, Vec<usize>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_error(path))?;
    let table = read_table(file, path)?;
    let n = table.columns.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if features.is_empty() {
        return Err(Error::Data("model has no input features".into()));
    }
    let mut keep = vec![true; n];
    let mut columns = Vec::with_capacity(features.len());
    for spec in features {
        let cells = &table.columns[column_index(&table, spec.source(), path)?];
        let values: Vec<f64> = match spec {
            FeatureSpec::Numeric { .. } => cells
                .iter()
                .zip(keep.iter_mut())
                .map(|(c, k)| {
                    let v = parse_number(c);
                    *k &= v.is_some();
                    v.unwrap_or(0.0)
                })
                .collect(),
            FeatureSpec::OneHot { level, .. } => cells.iter().map(|c| f64::from(u8::from(c.trim() == level))).collect(),
        };
        columns.push(values);
    }
    let target_values: Vec<f64> = match target {
        Some(name) => {
            let cells = &table.columns[column_index(&table, name, path)?];
            cells
                .iter()
                .enumerate()
                .map(|(row, c)| {
                    parse_number(c).ok_or_else(|| {
                        Error::Data(format!("{}: target {name:?} is not numeric at data row {row}: {c:?}", path.display()))
                    })
                })
                .collect::<Result<_>>()?
        }
        None => vec![0.0; n],
    };
    let rows: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: every row has a missing or unparseable number", path.display())));
    }
    let features_kept = columns.into_iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect();
    let names = features.iter().map(|s| s.name().to_string()).collect();
    let kinds = features.iter().map(FeatureSpec::kind).collect();
    let dataset = Dataset::new(features_kept, rows.iter().map(|&i| target_values[i]).collect(), names, kinds)?;
    Ok((dataset, rows))
}
