use thiserror::Error;

/// Errors produced anywhere in the discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("times are not strictly increasing at index {0}")]
    NotIncreasing(usize),

    #[error("factorization of the damped Hessian failed even at alpha = {alpha:e}")]
    Factorization { alpha: f64 },

    #[error("ambiguous Hessian entry ({row}, {col}) under the given coloring")]
    AmbiguousRecovery { row: usize, col: usize },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("component {0} has no usable observations")]
    MissingComponent(usize),

    #[error("every hyperparameter cell failed")]
    AllCellsFailed,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
