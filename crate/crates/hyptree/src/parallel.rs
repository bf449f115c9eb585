//! Cross-validation and grid search spread over a rayon pool.
//!
//! Work items are fits of one (combination, fold) pair; results are collected
//! in item order, so the output does not depend on the number of threads.

use hyptree_core::evaluate::{fold_metric, fold_score, CvResult, GridOutcome, GridRecord, Metric, ParamGrid};
use hyptree_core::{evaluate, BoosterConfig, Dataset, FoldPlan};
use rayon::prelude::*;

use crate::error::{Error, Result};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    if jobs == 0 {
        return Err(Error::Data("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Data(format!("cannot start {jobs} worker threads: {e}")))
}

pub fn cross_validate(dataset: &Dataset, config: &BoosterConfig, folds: &FoldPlan, metric: Metric, jobs: usize) -> Result<CvResult> {
    let scores = pool(jobs)?.install(|| {
        (0..folds.folds.len())
            .into_par_iter()
            .map(|f| fold_score(dataset, config, folds, f, metric))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(CvResult::from_folds(metric, &scores)?)
}

/// Evaluates every combination of `grid` and refits the best one on all rows.
pub fn grid_search(dataset: &Dataset, grid: &ParamGrid, folds: &FoldPlan, metric: Metric, jobs: usize) -> Result<GridOutcome> {
    let configs = grid.combinations()?;
    let k = folds.folds.len();
    let metrics = pool(jobs)?.install(|| {
        (0..configs.len() * k)
            .into_par_iter()
            .map(|item| fold_metric(dataset, &configs[item / k], folds, item % k, metric))
            .collect::<Result<Vec<f64>, _>>()
    })?;
    let records = configs
        .iter()
        .zip(metrics.chunks(k))
        .enumerate()
        .map(|(i, (cfg, m))| GridRecord::new(i, *cfg, m.to_vec()))
        .collect();
    Ok(evaluate::finish_grid(dataset, metric, records)?)
}
