//! Gradient boosted decision trees regularized by a permutation null-gain
//! hypothesis test.
//!
//! Every split of a freshly grown tree is compared against gains obtained by
//! splitting a resampled gradient/Hessian sample on an information-free
//! (partially permuted) copy of the target. A split survives only if its gain
//! strictly exceeds every null draw, and boosting stops as soon as a new
//! tree is pruned down to its root. Classical L1/L2/minimum-gain penalties are
//! kept as a baseline regularizer.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, CSV ingestion and
//! the command line live in the `hyptree` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod booster;
pub mod calibrate;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod loss;
pub mod nulltest;
pub mod rng;
pub mod tree;

pub use crate::booster::{fit, fit_detailed, predict, BoosterConfig, Ensemble, FitOutcome, Regularizer};
pub use crate::data::{build_bins, kfold_indices, one_hot_encode, BinnedColumn, ColumnKind, Dataset, FoldPlan};
pub use crate::error::{Error, Result};
pub use crate::loss::{GradHess, LossKind};
pub use crate::nulltest::{DrawBudget, NullSplitRule, PruneReport, TestConfig};
pub use crate::tree::{Node, Penalties, SplitCandidate, Tree};
