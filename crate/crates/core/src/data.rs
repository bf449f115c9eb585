//! In-memory datasets, categorical encoding, quantile binning and fold plans.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default number of histogram buckets per feature.
pub const DEFAULT_MAX_BINS: usize = 256;
/// Largest bucket count representable by 16-bit codes.
pub const MAX_BINS_LIMIT: usize = u16::MAX as usize + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    OneHot,
}

/// Column-major feature matrix plus target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    target: Vec<f64>,
    column_names: Vec<String>,
    column_kinds: Vec<ColumnKind>,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        target: Vec<f64>,
        column_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Empty("dataset rows"));
        }
        if features.is_empty() {
            return Err(Error::Empty("dataset columns"));
        }
        let n = target.len();
        for column in &features {
            if column.len() != n {
                return Err(Error::LengthMismatch {
                    what: "feature column",
                    expected: n,
                    got: column.len(),
                });
            }
            if let Some(index) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "feature column", index });
            }
        }
        if let Some(index) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "target", index });
        }
        for (what, len) in [("column_names", column_names.len()), ("column_kinds", column_kinds.len())] {
            if len != features.len() {
                return Err(Error::LengthMismatch { what, expected: features.len(), got: len });
            }
        }
        Ok(Self { features, target, column_names, column_kinds })
    }

    /// Numeric columns named `x0`, `x1`, ...
    pub fn from_columns(features: Vec<Vec<f64>>, target: Vec<f64>) -> Result<Self> {
        let names = (0..features.len()).map(|j| format!("x{j}")).collect();
        let kinds = vec![ColumnKind::Numeric; features.len()];
        Self::new(features, target, names, kinds)
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_cols(&self) -> usize {
        self.features.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.features[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_kinds(&self) -> &[ColumnKind] {
        &self.column_kinds
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.features[col][row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.features.iter().map(|c| c[row]).collect()
    }

    /// Rows in the given order. Panics on out-of-range indices.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self
            .features
            .iter()
            .map(|c| rows.iter().map(|&i| c[i]).collect())
            .collect();
        let target = rows.iter().map(|&i| self.target[i]).collect();
        Self::new(features, target, self.column_names.clone(), self.column_kinds.clone())
    }
}

/// One 0/1 indicator column produced by [`one_hot_encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotColumn {
    pub name: String,
    pub level: String,
    pub values: Vec<f64>,
}

/// One indicator column per distinct level, in order of first appearance.
/// Columns are named `name=level`.
pub fn one_hot_encode<S: AsRef<str>>(values: &[S], name: &str) -> Vec<OneHotColumn> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut columns: Vec<OneHotColumn> = Vec::new();
    for (row, value) in values.iter().enumerate() {
        let level = value.as_ref();
        let slot = *index.entry(level).or_insert_with(|| {
            columns.push(OneHotColumn {
                name: format!("{name}={level}"),
                level: level.into(),
                values: vec![0.0; values.len()],
            });
            columns.len() - 1
        });
        columns[slot].values[row] = 1.0;
    }
    columns
}

/// Quantized view of one feature column.
///
/// Bin `b` holds values in `[edges[b-1], edges[b])`; the outer bins are open.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedColumn {
    pub edges: Vec<f64>,
    pub codes: Vec<u16>,
}

impl BinnedColumn {
    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// Bin index a raw value falls into.
    pub fn code_of(&self, value: f64) -> u16 {
        self.edges.partition_point(|&e| e <= value) as u16
    }
}

/// A cut point `c` with `lo < c <= hi`, the midpoint whenever it is representable.
fn cut_between(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    let mid = if mid.is_finite() { mid } else { lo / 2.0 + hi / 2.0 };
    if mid > lo && mid <= hi {
        mid
    } else {
        hi
    }
}

/// Equal-frequency binning.
///
/// When the column has at most `max_bins` distinct values every distinct value
/// gets its own bin and the edges are the midpoints between neighbours, so the
/// binned split set equals the exhaustive one.
pub fn build_bins(values: &[f64], max_bins: usize) -> Result<BinnedColumn> {
    if values.is_empty() {
        return Err(Error::Empty("column to bin"));
    }
    if !(2..=MAX_BINS_LIMIT).contains(&max_bins) {
        return Err(Error::InvalidConfig(format!(
            "max_bins must be in 2..={MAX_BINS_LIMIT}, got {max_bins}"
        )));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "column to bin", index });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();

    let edges: Vec<f64> = if distinct.len() <= max_bins {
        distinct.windows(2).map(|w| cut_between(w[0], w[1])).collect()
    } else {
        let n = sorted.len();
        let mut edges: Vec<f64> = Vec::with_capacity(max_bins - 1);
        for q in 1..max_bins {
            let i = (q * n + max_bins / 2) / max_bins;
            if i == 0 || i >= n {
                continue;
            }
            let (lo, hi) = (sorted[i - 1], sorted[i]);
            if lo < hi {
                let edge = cut_between(lo, hi);
                if edges.last().is_none_or(|&last| edge > last) {
                    edges.push(edge);
                }
            }
        }
        edges
    };

    let codes = values
        .iter()
        .map(|&v| edges.partition_point(|&e| e <= v) as u16)
        .collect();
    Ok(BinnedColumn { edges, codes })
}

/// Disjoint row-index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Checks the partition invariants of a (possibly hand-built) plan.
    pub fn validate(&self) -> Result<()> {
        if self.folds.len() < 2 {
            return Err(Error::InvalidConfig("a fold plan needs at least two folds".into()));
        }
        let mut seen = vec![false; self.n];
        for fold in &self.folds {
            if fold.is_empty() {
                return Err(Error::InvalidConfig("empty fold".into()));
            }
            for &i in fold {
                if i >= self.n || seen[i] {
                    return Err(Error::InvalidConfig(format!("row {i} is out of range or repeated")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("fold plan does not cover every row".into()));
        }
        Ok(())
    }

    /// Every row not in fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut held_out = vec![false; self.n];
        for &i in &self.folds[f] {
            held_out[i] = true;
        }
        (0..self.n).filter(|&i| !held_out[i]).collect()
    }
}

/// Shuffled k-fold assignment; fold sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!("need 2 <= k <= n, got k={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0x6b66_6f6c_64]));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (position, &row) in order.iter().enumerate() {
        folds[position % k].push(row);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { n, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn one_hot_two_levels() {
        let cols = one_hot_encode(&["a", "b", "a"], "col");
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0].name, "col=a");
        assert_eq!(cols[0].values, [1.0, 0.0, 1.0]);
        assert_eq!(cols[1].values, [0.0, 1.0, 0.0]);
    }

    #[test]
    fn one_hot_single_level_and_empty_string() {
        let cols = one_hot_encode(&["x", "x", "x"], "c");
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].values, [1.0, 1.0, 1.0]);

        let cols = one_hot_encode(&["", "a", ""], "c");
        assert_eq!(cols[0].level, "");
        assert_eq!(cols[0].values, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let cols = one_hot_encode(&["a", "b", "c"], "c");
        for row in 0..3 {
            let sum: f64 = cols.iter().map(|c| c.values[row]).sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn bins_for_few_distinct_values() {
        let b = build_bins(&[1.0, 2.0, 3.0], 256).unwrap();
        assert_eq!(b.n_bins(), 3);
        assert_eq!(b.codes, [0, 1, 2]);
        assert_eq!(b.edges, [1.5, 2.5]);
    }

    #[test]
    fn constant_column_is_one_bin() {
        let b = build_bins(&[5.0, 5.0, 5.0], 256).unwrap();
        assert_eq!(b.n_bins(), 1);
        assert_eq!(b.codes, [0, 0, 0]);
    }

    #[test]
    fn adjacent_floats_still_separate() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let b = build_bins(&[hi, lo], 4).unwrap();
        assert_eq!(b.codes, [1, 0]);
        let b = build_bins(&[f64::MAX, -f64::MAX], 4).unwrap();
        assert_eq!(b.codes, [1, 0]);
    }

    #[test]
    fn bins_reject_bad_input() {
        assert!(build_bins(&[], 4).is_err());
        assert!(build_bins(&[1.0], 1).is_err());
        assert!(build_bins(&[1.0, f64::NAN], 4).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let plan = kfold_indices(10, 5, 3).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 2));
        let plan = kfold_indices(11, 5, 3).unwrap();
        let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [2, 2, 2, 2, 3]);
        plan.validate().unwrap();
    }

    #[test]
    fn kfold_is_deterministic_and_checks_k() {
        assert_eq!(kfold_indices(50, 5, 9).unwrap(), kfold_indices(50, 5, 9).unwrap());
        assert_ne!(kfold_indices(50, 5, 9).unwrap(), kfold_indices(50, 5, 10).unwrap());
        assert!(kfold_indices(3, 4, 0).is_err());
        assert!(kfold_indices(3, 1, 0).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::from_columns(vec![vec![1.0, 2.0]], vec![1.0]).is_err());
        assert!(Dataset::from_columns(vec![], vec![1.0]).is_err());
        assert!(Dataset::from_columns(vec![vec![f64::INFINITY]], vec![1.0]).is_err());
        let d = Dataset::from_columns(vec![vec![1.0, 3.0, 5.0]], vec![2.0, 4.0, 6.0]).unwrap();
        assert_eq!((d.n_rows(), d.n_cols()), (3, 1));
        assert_eq!(d.column_names()[0], "x0".to_string());
        assert_eq!(d.subset(&[2, 0]).unwrap().target(), [6.0, 2.0]);
    }
}
