//! The boosting loop and the ensemble it produces.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{build_bins, BinnedColumn, Dataset, DEFAULT_MAX_BINS};
use crate::error::{Error, Result};
use crate::loss::{self, LossKind};
use crate::nulltest::{self, PruneReport, TestConfig};
use crate::rng;
use crate::tree::{grow_tree, GrowParams, Penalties, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Regularizer {
    /// Unpenalized growth followed by null-test pruning; a fully pruned tree
    /// ends training.
    HypothesisTest(TestConfig),
    /// Penalized split scores and leaf weights; trains to the tree cap.
    Penalties(Penalties),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoosterConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_estimators_cap: usize,
    pub regularizer: Regularizer,
    pub min_child_rows: usize,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for BoosterConfig {
    fn default() -> Self {
        BoosterConfig {
            loss: LossKind::SquaredError,
            learning_rate: 0.1,
            max_depth: 4,
            n_estimators_cap: 1000,
            regularizer: Regularizer::HypothesisTest(TestConfig::default()),
            min_child_rows: 1,
            max_bins: DEFAULT_MAX_BINS,
            seed: 0,
        }
    }
}

impl BoosterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("learning_rate must be in (0, 1], got {}", self.learning_rate)));
        }
        if self.min_child_rows == 0 {
            return Err(Error::InvalidConfig("min_child_rows must be at least 1".into()));
        }
        if self.max_bins < 2 {
            return Err(Error::InvalidConfig(format!("max_bins must be at least 2, got {}", self.max_bins)));
        }
        match &self.regularizer {
            Regularizer::HypothesisTest(t) => t.validate(),
            Regularizer::Penalties(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean training loss after this iteration.
    pub train_loss: f64,
    /// Whether the tree grown in this iteration joined the ensemble.
    pub tree_added: bool,
    pub splits: usize,
    pub tests_performed: usize,
    pub splits_pruned: usize,
    pub splits_kept: usize,
}

/// Additive model: `raw = base_score + η·Σ tree(x)`, prediction `link(raw)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub loss: LossKind,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub training_log: Vec<IterationRecord>,
}

impl Ensemble {
    pub fn raw_with(&self, feature: impl Fn(usize) -> f64) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + self.learning_rate * t.predict_with(&feature))
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.loss.link(self.raw_with(|j| row[j]))
    }

    fn check_columns(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_cols() != self.n_features {
            return Err(Error::LengthMismatch {
                what: "dataset columns",
                expected: self.n_features,
                got: dataset.n_cols(),
            });
        }
        Ok(())
    }

    pub fn predict_raw(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        self.check_columns(dataset)?;
        Ok((0..dataset.n_rows()).map(|i| self.raw_with(|j| dataset.value(i, j))).collect())
    }
}

/// Predictions on the output scale (probabilities for logistic loss).
pub fn predict(ensemble: &Ensemble, dataset: &Dataset) -> Result<Vec<f64>> {
    Ok(ensemble.predict_raw(dataset)?.into_iter().map(|r| ensemble.loss.link(r)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub ensemble: Ensemble,
    /// One report per tested tree, including the final fully pruned one.
    pub prune_reports: Vec<PruneReport>,
}

pub fn fit(dataset: &Dataset, config: &BoosterConfig) -> Result<Ensemble> {
    fit_detailed(dataset, config).map(|o| o.ensemble)
}

pub fn fit_detailed(dataset: &Dataset, config: &BoosterConfig) -> Result<FitOutcome> {
    config.validate()?;
    let y = dataset.target();
    config.loss.check_targets(y)?;
    let binned = dataset
        .columns()
        .iter()
        .map(|c| build_bins(c, config.max_bins))
        .collect::<Result<Vec<BinnedColumn>>>()?;

    let base_score = loss::base_score(config.loss, y)?;
    let mut raw = alloc::vec![base_score; dataset.n_rows()];
    let rows: Vec<usize> = (0..dataset.n_rows()).collect();
    let grow = GrowParams {
        max_depth: config.max_depth,
        min_child_rows: config.min_child_rows,
        penalties: match config.regularizer {
            Regularizer::HypothesisTest(_) => None,
            Regularizer::Penalties(p) => Some(p),
        },
    };

    let mut ensemble = Ensemble {
        loss: config.loss,
        base_score,
        learning_rate: config.learning_rate,
        n_features: dataset.n_cols(),
        trees: Vec::new(),
        training_log: Vec::new(),
    };
    let mut prune_reports = Vec::new();

    for iteration in 0..config.n_estimators_cap {
        let gh = loss::grad_hess(config.loss, y, &raw)?;
        let grown = grow_tree(&rows, &binned, &gh, &grow)?;
        let mut record = IterationRecord {
            iteration,
            train_loss: 0.0,
            tree_added: true,
            splits: 0,
            tests_performed: 0,
            splits_pruned: 0,
            splits_kept: 0,
        };
        let tree = match &config.regularizer {
            Regularizer::Penalties(_) => grown,
            Regularizer::HypothesisTest(test) => {
                let root = rng::mix(config.seed, test.seed);
                let test = TestConfig { max_bins: config.max_bins, ..*test };
                let (pruned, report) = nulltest::prune_tree(&grown, &gh, y, &test, root, iteration as u64)?;
                record.tests_performed = report.tests_performed;
                record.splits_pruned = report.splits_pruned;
                record.splits_kept = report.splits_kept;
                let stop = nulltest::stop_check(&report);
                prune_reports.push(report);
                if stop {
                    record.tree_added = false;
                    record.train_loss = loss::loss_value(config.loss, y, &raw)?;
                    ensemble.training_log.push(record);
                    break;
                }
                pruned
            }
        };
        for (i, r) in raw.iter_mut().enumerate() {
            *r += config.learning_rate * tree.predict_with(|j| dataset.value(i, j));
        }
        record.splits = tree.n_splits();
        record.train_loss = loss::loss_value(config.loss, y, &raw)?;
        ensemble.training_log.push(record);
        ensemble.trees.push(tree);
    }
    Ok(FitOutcome { ensemble, prune_reports })
}
