use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("logistic target must be 0 or 1, found {value} at row {row}")]
    NonBinaryTarget { row: usize, value: f64 },
    #[error("hessian sum must be positive, got {0}")]
    NonPositiveHessian(f64),
    #[error("cover {cover} exceeds the {n} available training rows")]
    CoverTooLarge { cover: usize, n: usize },
    #[error("roc auc needs both classes present")]
    SingleClass,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
