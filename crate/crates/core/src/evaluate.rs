//! Metrics, k-fold cross-validation and exhaustive grid search.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::booster::{fit, predict, BoosterConfig, Ensemble, Regularizer};
use crate::data::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::nulltest::TestConfig;
use crate::rng;
use crate::tree::Penalties;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    RocAuc,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::RocAuc)
    }

    pub fn compute(self, y: &[f64], prediction: &[f64]) -> Result<f64> {
        match self {
            Metric::Mae => mae(y, prediction),
            Metric::RocAuc => roc_auc(y, prediction),
        }
    }

    /// `true` when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub value: f64,
    pub n: usize,
}

impl MetricReport {
    pub fn new(metric: Metric, y: &[f64], prediction: &[f64]) -> Result<Self> {
        Ok(MetricReport { metric, value: metric.compute(y, prediction)?, n: y.len() })
    }
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch { what: "predictions", expected: y.len(), got: yhat.len() });
    }
    if y.is_empty() {
        return Err(Error::Empty("metric inputs"));
    }
    Ok(())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mann-Whitney form of the area under the ROC curve; tied scores count ½.
pub fn roc_auc(y: &[f64], scores: &[f64]) -> Result<f64> {
    check_pair(y, scores)?;
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryTarget { row, value: y[row] });
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { what: "scores", index });
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    let negatives = y.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the positive rank sum keeps midranks integral
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1 share the midrank
        let doubled_midrank = (start + end + 2) as u64;
        let tied_positives = order[start..=end].iter().filter(|&&i| y[i] == 1.0).count() as u64;
        doubled_rank_sum += tied_positives * doubled_midrank;
        start = end + 1;
    }
    let p = positives as u64;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / (2 * p * negatives as u64) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub metric: Metric,
    /// Held-out metric per fold.
    pub fold_metrics: Vec<f64>,
    /// Metric on each fold's training rows.
    pub train_metrics: Vec<f64>,
    pub mean: f64,
}

fn check_folds(dataset: &Dataset, folds: &FoldPlan) -> Result<()> {
    folds.validate()?;
    if folds.n != dataset.n_rows() {
        return Err(Error::LengthMismatch { what: "fold plan rows", expected: dataset.n_rows(), got: folds.n });
    }
    Ok(())
}

/// In-sample and held-out metric of one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub train: f64,
    pub test: f64,
}

fn fit_fold(dataset: &Dataset, config: &BoosterConfig, folds: &FoldPlan, f: usize) -> Result<(Ensemble, Dataset, Dataset)> {
    check_folds(dataset, folds)?;
    if f >= folds.folds.len() {
        return Err(Error::InvalidConfig(format!("fold {f} out of range")));
    }
    let train = dataset.subset(&folds.complement(f))?;
    let test = dataset.subset(&folds.folds[f])?;
    let cfg = BoosterConfig { seed: rng::derive_seed(config.seed, &[f as u64]), ..*config };
    Ok((fit(&train, &cfg)?, train, test))
}

/// Fits on the complement of fold `f` (seed `derive(config.seed, f)`) and
/// scores both parts.
pub fn fold_score(dataset: &Dataset, config: &BoosterConfig, folds: &FoldPlan, f: usize, metric: Metric) -> Result<FoldScore> {
    let (model, train, test) = fit_fold(dataset, config, folds, f)?;
    Ok(FoldScore {
        train: metric.compute(train.target(), &predict(&model, &train)?)?,
        test: metric.compute(test.target(), &predict(&model, &test)?)?,
    })
}

/// Held-out part of [`fold_score`] only.
pub fn fold_metric(dataset: &Dataset, config: &BoosterConfig, folds: &FoldPlan, f: usize, metric: Metric) -> Result<f64> {
    let (model, _, test) = fit_fold(dataset, config, folds, f)?;
    metric.compute(test.target(), &predict(&model, &test)?)
}

impl CvResult {
    pub fn from_folds(metric: Metric, scores: &[FoldScore]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("fold scores"));
        }
        let fold_metrics: Vec<f64> = scores.iter().map(|s| s.test).collect();
        let mean = fold_metrics.iter().sum::<f64>() / fold_metrics.len() as f64;
        Ok(CvResult { metric, train_metrics: scores.iter().map(|s| s.train).collect(), fold_metrics, mean })
    }
}

/// Sequential k-fold cross-validation; see [`fold_score`].
pub fn cross_validate(dataset: &Dataset, config: &BoosterConfig, folds: &FoldPlan, metric: Metric) -> Result<CvResult> {
    check_folds(dataset, folds)?;
    let scores = (0..folds.folds.len())
        .map(|f| fold_score(dataset, config, folds, f, metric))
        .collect::<Result<Vec<_>>>()?;
    CvResult::from_folds(metric, &scores)
}

/// Values searched for the regularizer-specific dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SearchSpace {
    HypothesisTest { k_draws: Vec<u32>, rho: Vec<f64> },
    Penalties { gamma: Vec<f64>, lambda: Vec<f64>, n_estimators: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    /// Fixed settings; the searched fields are overwritten per combination.
    pub base: BoosterConfig,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub space: SearchSpace,
}

impl ParamGrid {
    /// learning rate {0.05, 0.1, 0.3} × depth {2, 4, 6} × k {1..6} × ρ {0, 0.01, 0.1, 0.5}.
    pub fn default_hypothesis_test(base: BoosterConfig) -> Self {
        ParamGrid {
            base,
            learning_rate: alloc::vec![0.05, 0.1, 0.3],
            max_depth: alloc::vec![2, 4, 6],
            space: SearchSpace::HypothesisTest { k_draws: (1..=6).collect(), rho: alloc::vec![0.0, 0.01, 0.1, 0.5] },
        }
    }

    /// learning rate × depth as above × γ {0, 1, 10} × λ {0, 1, 10} × trees {50, 200, 1000}.
    pub fn default_penalties(base: BoosterConfig) -> Self {
        ParamGrid {
            base,
            learning_rate: alloc::vec![0.05, 0.1, 0.3],
            max_depth: alloc::vec![2, 4, 6],
            space: SearchSpace::Penalties {
                gamma: alloc::vec![0.0, 1.0, 10.0],
                lambda: alloc::vec![0.0, 1.0, 10.0],
                n_estimators: alloc::vec![50, 200, 1000],
            },
        }
    }

    /// Cartesian product in declaration order; the last listed dimension varies fastest.
    pub fn combinations(&self) -> Result<Vec<BoosterConfig>> {
        let mut out = Vec::new();
        let base = self.base;
        for &learning_rate in &self.learning_rate {
            for &max_depth in &self.max_depth {
                let cfg = BoosterConfig { learning_rate, max_depth, ..base };
                match &self.space {
                    SearchSpace::HypothesisTest { k_draws, rho } => {
                        let template = match base.regularizer {
                            Regularizer::HypothesisTest(t) => t,
                            Regularizer::Penalties(_) => TestConfig::default(),
                        };
                        for &k in k_draws {
                            for &r in rho {
                                let test = TestConfig { k_draws: k, rho: r, ..template };
                                out.push(BoosterConfig { regularizer: Regularizer::HypothesisTest(test), ..cfg });
                            }
                        }
                    }
                    SearchSpace::Penalties { gamma, lambda, n_estimators } => {
                        let alpha_l1 = match base.regularizer {
                            Regularizer::Penalties(p) => p.alpha_l1,
                            Regularizer::HypothesisTest(_) => 0.0,
                        };
                        for &g in gamma {
                            for &l in lambda {
                                for &n in n_estimators {
                                    let p = Penalties { lambda: l, alpha_l1, gamma: g };
                                    out.push(BoosterConfig {
                                        regularizer: Regularizer::Penalties(p),
                                        n_estimators_cap: n,
                                        ..cfg
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidConfig("parameter grid has no combinations".into()));
        }
        for cfg in &out {
            cfg.validate()?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub index: usize,
    pub config: BoosterConfig,
    pub fold_metrics: Vec<f64>,
    pub mean: f64,
}

impl GridRecord {
    pub fn new(index: usize, config: BoosterConfig, fold_metrics: Vec<f64>) -> Self {
        let mean = fold_metrics.iter().sum::<f64>() / fold_metrics.len() as f64;
        GridRecord { index, config, fold_metrics, mean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("values to summarize"));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(Spread { min, mean, max })
    }

    /// `(max − min) / mean`.
    pub fn relative_range(&self) -> f64 {
        (self.max - self.min) / self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub metric: Metric,
    pub records: Vec<GridRecord>,
    pub best_index: usize,
    pub best_config: BoosterConfig,
    /// Spread of the mean CV metric across all combinations.
    pub spread: Spread,
}

impl GridResult {
    /// Assembles a result from records in grid order; ties keep the earliest.
    pub fn from_records(metric: Metric, records: Vec<GridRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("grid records"));
        }
        let mut best_index = 0;
        for (i, r) in records.iter().enumerate() {
            if metric.better(r.mean, records[best_index].mean) {
                best_index = i;
            }
        }
        let means: Vec<f64> = records.iter().map(|r| r.mean).collect();
        let spread = Spread::of(&means)?;
        Ok(GridResult { metric, best_config: records[best_index].config, best_index, records, spread })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub result: GridResult,
    /// Best configuration refit on the whole dataset.
    pub final_model: Ensemble,
}

pub fn evaluate_combination(
    index: usize,
    config: &BoosterConfig,
    dataset: &Dataset,
    folds: &FoldPlan,
    metric: Metric,
) -> Result<GridRecord> {
    check_folds(dataset, folds)?;
    let fold_metrics = (0..folds.folds.len())
        .map(|f| fold_metric(dataset, config, folds, f, metric))
        .collect::<Result<Vec<f64>>>()?;
    Ok(GridRecord::new(index, *config, fold_metrics))
}

/// Sequential exhaustive search. Callers wanting parallelism can map
/// [`evaluate_combination`] over [`ParamGrid::combinations`] themselves and
/// finish with [`finish_grid`].
pub fn grid_search(dataset: &Dataset, grid: &ParamGrid, folds: &FoldPlan, metric: Metric) -> Result<GridOutcome> {
    let records = grid
        .combinations()?
        .iter()
        .enumerate()
        .map(|(i, cfg)| evaluate_combination(i, cfg, dataset, folds, metric))
        .collect::<Result<Vec<_>>>()?;
    finish_grid(dataset, metric, records)
}

pub fn finish_grid(dataset: &Dataset, metric: Metric, records: Vec<GridRecord>) -> Result<GridOutcome> {
    let result = GridResult::from_records(metric, records)?;
    let final_model = fit(dataset, &result.best_config)
        .map_err(|e| Error::InvalidConfig(format!("refitting best configuration failed: {e}")))?;
    Ok(GridOutcome { result, final_model })
}
