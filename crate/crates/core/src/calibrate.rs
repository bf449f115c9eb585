//! Monte Carlo calibration of the null-gain test and synthetic data generators.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{build_bins, Dataset, DEFAULT_MAX_BINS};
use crate::error::{Error, Result};
use crate::loss::{self, LossKind};
use crate::nulltest::{self, DrawBudget, NodeStream, NullSplitRule, TestConfig, TouchCount, Verdict};
use crate::rng::{self, StreamRng};
use crate::tree::find_best_split;

fn normals(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// `j` standard normal features independent of a standard normal target.
pub fn noise_dataset(n: usize, j: usize, seed: u64) -> Result<Dataset> {
    let mut rng = rng::stream(seed, &[0x6e6f_6973_65]);
    let features = (0..j).map(|_| normals(&mut rng, n)).collect();
    let target = normals(&mut rng, n);
    Dataset::from_columns(features, target)
}

/// `y = 2·x₀ + ε` with `x ~ U(0, 1)` on `j` columns and `ε ~ N(0, noise_sd²)`.
pub fn linear_signal_dataset(n: usize, j: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    let mut rng = rng::stream(seed, &[0x7369_676e_616c]);
    let features: Vec<Vec<f64>> = (0..j).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let target = (0..n)
        .map(|i| {
            let e: f64 = StandardNormal.sample(&mut rng);
            2.0 * features[0][i] + noise_sd * e
        })
        .collect();
    Dataset::from_columns(features, target)
}

/// `y = sin(2π·x₀) + x₁ + (0.2 + x₀)·ε` with `x ~ U(0, 1)`: noise grows with `x₀`.
pub fn heteroskedastic_dataset(n: usize, j: usize, seed: u64) -> Result<Dataset> {
    if j < 2 {
        return Err(Error::InvalidConfig("heteroskedastic data needs at least 2 columns".into()));
    }
    let mut rng = rng::stream(seed, &[0x6865_7465_726f]);
    let features: Vec<Vec<f64>> = (0..j).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let target = (0..n)
        .map(|i| {
            let (a, b) = (features[0][i], features[1][i]);
            let e: f64 = StandardNormal.sample(&mut rng);
            libm::sin(2.0 * core::f64::consts::PI * a) + b + (0.2 + a) * e
        })
        .collect();
    Dataset::from_columns(features, target)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { what: "correlation input", expected: a.len(), got: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::Empty("correlation input"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    Ok(sab / libm::sqrt(saa * sbb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type1Row {
    pub k_draws: u32,
    pub rho: f64,
    pub trials: usize,
    pub passes: usize,
    pub pass_rate: f64,
    /// `2^-k`.
    pub nominal_alpha: f64,
    /// Binomial standard error of the pass rate at the nominal alpha.
    pub std_error: f64,
    pub within_3se: bool,
    pub null_draws: u32,
    /// `1/(null_draws+1)`: the pass rate when the candidate gain is
    /// exchangeable with the null gains.
    pub exchangeable_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Type1Setup {
    pub n: usize,
    pub rho: f64,
    pub trials: usize,
    pub seed: u64,
    pub null_split: NullSplitRule,
    pub budget: DrawBudget,
    pub max_bins: usize,
}

impl Type1Setup {
    pub fn new(n: usize, rho: f64, trials: usize, seed: u64) -> Self {
        Type1Setup {
            n,
            rho,
            trials,
            seed,
            null_split: NullSplitRule::default(),
            budget: DrawBudget::default(),
            max_bins: DEFAULT_MAX_BINS,
        }
    }
}

/// Root-split pass rates on data where one normal feature is independent of
/// a normal target (squared error, first boosting iteration).
///
/// Trial `t` uses the same data for every `k`; null draws are seeded per `(k, t)`.
pub fn calibrate_type1(setup: &Type1Setup, k_draws: &[u32]) -> Result<Vec<Type1Row>> {
    if setup.trials < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 trials, got {}", setup.trials)));
    }
    if setup.n < 2 {
        return Err(Error::InvalidConfig("need at least 2 rows".into()));
    }
    // candidate gain and cover per trial
    let candidates = (0..setup.trials)
        .map(|t| {
            let data = noise_dataset(setup.n, 1, rng::derive_seed(setup.seed, &[t as u64]))?;
            let y = data.target();
            let raw = alloc::vec![loss::base_score(LossKind::SquaredError, y)?; y.len()];
            let gh = loss::grad_hess(LossKind::SquaredError, y, &raw)?;
            let bins = [build_bins(data.column(0), setup.max_bins)?];
            let rows: Vec<usize> = (0..setup.n).collect();
            let split = find_best_split(&rows, &bins, &gh, 1);
            Ok((data, gh, split))
        })
        .collect::<Result<Vec<_>>>()?;

    k_draws
        .iter()
        .map(|&k| {
            let config = TestConfig {
                k_draws: k,
                rho: setup.rho,
                seed: setup.seed,
                null_split: setup.null_split,
                budget: setup.budget,
                max_bins: setup.max_bins,
                ..TestConfig::default()
            };
            config.validate()?;
            let mut passes = 0;
            for (t, (data, gh, split)) in candidates.iter().enumerate() {
                let Some(split) = split else { continue };
                let stream = NodeStream {
                    root_seed: rng::derive_seed(setup.seed, &[u64::from(k)]),
                    tree_index: t as u64,
                    node_id: 0,
                };
                let outcome = nulltest::split_test(split.gain, split.cover, gh, data.target(), &config, stream)?;
                if outcome.verdict == Verdict::Pass {
                    passes += 1;
                }
            }
            let trials = setup.trials;
            let pass_rate = passes as f64 / trials as f64;
            let nominal_alpha = config.alpha();
            let std_error = libm::sqrt(nominal_alpha * (1.0 - nominal_alpha) / trials as f64);
            Ok(Type1Row {
                k_draws: k,
                rho: setup.rho,
                trials,
                passes,
                pass_rate,
                nominal_alpha,
                std_error,
                within_3se: (pass_rate - nominal_alpha).abs() <= 3.0 * std_error,
                null_draws: config.null_draws(),
                exchangeable_rate: config.exchangeable_pass_rate(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub rho: f64,
    pub c: usize,
    pub reps: usize,
    pub mean_correlation: f64,
    pub std_correlation: f64,
}

/// Empirical correlation between `R_Y` and a normal `y_c` of size `c`.
pub fn calibrate_correlation(c: usize, rhos: &[f64], reps: usize, seed: u64) -> Result<Vec<CorrelationRow>> {
    if c < 100 {
        return Err(Error::InvalidConfig(format!("need c >= 100, got {c}")));
    }
    if reps == 0 {
        return Err(Error::InvalidConfig("need at least one repetition".into()));
    }
    rhos.iter()
        .enumerate()
        .map(|(ri, &rho)| {
            let correlations = (0..reps)
                .map(|rep| {
                    let mut rng = rng::stream(seed, &[ri as u64, rep as u64]);
                    let y_c = normals(&mut rng, c);
                    let r_y = nulltest::make_r_y(&y_c, rho, &mut rng)?;
                    pearson(&r_y, &y_c)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = correlations.iter().sum::<f64>() / reps as f64;
            let var = correlations.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / reps as f64;
            Ok(CorrelationRow { rho, c, reps, mean_correlation: mean, std_correlation: libm::sqrt(var) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryResult {
    pub trials: usize,
    pub exceed: usize,
    pub ties: usize,
    /// `exceed / trials`, ties counted as failures.
    pub exceed_rate: f64,
}

/// Pits one null draw against another on noise gradients of size `n`.
pub fn null_symmetry(n: usize, trials: usize, config: &TestConfig, seed: u64) -> Result<SymmetryResult> {
    config.validate()?;
    let data = noise_dataset(n, 1, seed)?;
    let y = data.target();
    let raw = alloc::vec![loss::base_score(LossKind::SquaredError, y)?; n];
    let gh = loss::grad_hess(LossKind::SquaredError, y, &raw)?;
    let (mut exceed, mut ties) = (0, 0);
    for t in 0..trials {
        let draw = |side: u64| {
            let mut rng = rng::stream(seed, &[t as u64, side]);
            nulltest::null_draw(&gh, y, n, config, &mut rng, &mut TouchCount::default())
        };
        let (candidate, competitor) = (draw(0)?.gain, draw(1)?.gain);
        if candidate > competitor {
            exceed += 1;
        } else if candidate == competitor {
            ties += 1;
        }
    }
    Ok(SymmetryResult { trials, exceed, ties, exceed_rate: exceed as f64 / trials as f64 })
}
