//! Losses and their first and second derivatives with respect to the raw score.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to logistic Hessians so that every Hessian stays positive.
pub const HESSIAN_FLOOR: f64 = 1e-16;
/// Clamp for the mean target before taking its logit.
const PROB_CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `½(y − ŷ)²` with identity link.
    SquaredError,
    /// Binary cross-entropy on a sigmoid link; targets must be 0 or 1.
    Logistic,
}

impl LossKind {
    /// Maps a raw additive score to a prediction.
    pub fn link(self, raw: f64) -> f64 {
        match self {
            LossKind::SquaredError => raw,
            LossKind::Logistic => sigmoid(raw),
        }
    }

    pub fn check_targets(self, y: &[f64]) -> Result<()> {
        if let Some(index) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "target", index });
        }
        if self == LossKind::Logistic {
            if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinaryTarget { row, value: y[row] });
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// Per-row gradients and Hessians at the current raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl GradHess {
    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// `(G, H)` summed over `rows`, in the given order.
    pub fn sums(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }
}

fn check_lengths(y: &[f64], raw: &[f64]) -> Result<()> {
    if y.len() != raw.len() {
        return Err(Error::LengthMismatch { what: "raw scores", expected: y.len(), got: raw.len() });
    }
    Ok(())
}

/// Loss of a single row.
pub fn row_loss(kind: LossKind, y: f64, raw: f64) -> f64 {
    match kind {
        LossKind::SquaredError => 0.5 * (raw - y) * (raw - y),
        LossKind::Logistic => softplus(raw) - y * raw,
    }
}

/// `g = ∂l/∂ŷ`, `h = ∂²l/∂ŷ²`.
pub fn grad_hess(kind: LossKind, y: &[f64], raw: &[f64]) -> Result<GradHess> {
    check_lengths(y, raw)?;
    kind.check_targets(y)?;
    let (g, h) = match kind {
        LossKind::SquaredError => (
            y.iter().zip(raw).map(|(&y, &r)| r - y).collect(),
            alloc::vec![1.0; y.len()],
        ),
        LossKind::Logistic => y
            .iter()
            .zip(raw)
            .map(|(&y, &r)| {
                let p = sigmoid(r);
                (p - y, (p * (1.0 - p)).max(HESSIAN_FLOOR))
            })
            .unzip(),
    };
    Ok(GradHess { g, h })
}

/// Mean per-row loss.
pub fn loss_value(kind: LossKind, y: &[f64], raw: &[f64]) -> Result<f64> {
    check_lengths(y, raw)?;
    kind.check_targets(y)?;
    if y.is_empty() {
        return Err(Error::Empty("targets"));
    }
    let total: f64 = y.iter().zip(raw).map(|(&y, &r)| row_loss(kind, y, r)).sum();
    Ok(total / y.len() as f64)
}

/// Constant raw score minimizing the loss: the mean target, or its logit.
pub fn base_score(kind: LossKind, y: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Empty("targets"));
    }
    kind.check_targets(y)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(match kind {
        LossKind::SquaredError => mean,
        LossKind::Logistic => {
            let p = mean.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            libm::log(p / (1.0 - p))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn squared_error_derivatives() {
        let gh = grad_hess(LossKind::SquaredError, &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(gh.g, [0.0, 0.0]);
        assert_eq!(gh.h, [1.0, 1.0]);
        let gh = grad_hess(LossKind::SquaredError, &[0.0], &[3.0]).unwrap();
        assert_eq!((gh.g[0], gh.h[0]), (3.0, 1.0));
    }

    #[test]
    fn logistic_derivatives_at_zero() {
        let gh = grad_hess(LossKind::Logistic, &[1.0], &[0.0]).unwrap();
        assert_eq!((gh.g[0], gh.h[0]), (-0.5, 0.25));
    }

    #[test]
    fn logistic_hessian_is_floored() {
        let gh = grad_hess(LossKind::Logistic, &[1.0, 0.0], &[800.0, -800.0]).unwrap();
        assert!(gh.h.iter().all(|&h| h >= HESSIAN_FLOOR));
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss_value(LossKind::SquaredError, &[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(loss_value(LossKind::SquaredError, &[0.0, 0.0], &[2.0, 2.0]).unwrap(), 2.0);
        let l = loss_value(LossKind::Logistic, &[1.0], &[0.0]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
        // saturated scores stay finite
        let l = loss_value(LossKind::Logistic, &[0.0], &[1000.0]).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn base_scores() {
        assert_eq!(base_score(LossKind::SquaredError, &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(base_score(LossKind::Logistic, &[0.0, 1.0]).unwrap(), 0.0);
        let b = base_score(LossKind::Logistic, &[1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((b - libm::log(3.0)).abs() < 1e-12);
        assert!(base_score(LossKind::Logistic, &[1.0, 1.0]).unwrap().is_finite());
        assert!(base_score(LossKind::SquaredError, &[]).is_err());
    }

    #[test]
    fn errors() {
        assert!(matches!(
            grad_hess(LossKind::SquaredError, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            grad_hess(LossKind::Logistic, &[0.5], &[0.0]),
            Err(Error::NonBinaryTarget { row: 0, .. })
        ));
        assert!(loss_value(LossKind::Logistic, &vec![2.0], &[0.0]).is_err());
    }
}
