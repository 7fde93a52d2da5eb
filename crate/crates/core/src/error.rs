use thiserror::Error;

/// Errors raised by instance validation, oracles and the analysis routines.
#[derive(Debug, Error)]
pub enum EcimError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("row {row} of J has length {found}, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("problem must have at least one spin")]
    Empty,
    #[error("spin {index} is {value}, expected -1 or +1")]
    InvalidSpin { index: usize, value: f64 },
    #[error("coordinate {index} = {value} lies outside [-1/2, 1/2]")]
    OutOfBox { index: usize, value: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("n = {n} exceeds the supported maximum of {max} for {what}")]
    UnsupportedSize {
        what: &'static str,
        n: usize,
        max: usize,
    },
    #[error("objective is flat over the sampled box: every sample sits at E*")]
    FlatObjective,
    #[error("PL ratio is not positive (minimum {0}); a stationary point with positive gap was sampled")]
    NonPositivePl(f64),
    #[error("kappa = {kappa} exceeds the recorded horizon K = {horizon}")]
    InsufficientHorizon { kappa: u64, horizon: usize },
    #[error("invalid fit window: {0}")]
    Window(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, EcimError>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> EcimError {
    EcimError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
