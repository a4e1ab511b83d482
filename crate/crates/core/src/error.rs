use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dimension: {0} must be at least 1")]
    EmptyDimension(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("rounding produced a non-finite iterate at iteration {iteration}")]
    RoundingDiverged {
        iteration: usize,
        /// Last finite `λ̄` iterate.
        last_finite: Box<nalgebra::DMatrix<f64>>,
    },

    #[error("all {0} training restarts diverged")]
    AllRestartsDiverged(usize),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("sdpa format error at line {line}: {reason}")]
    Sdpa { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
