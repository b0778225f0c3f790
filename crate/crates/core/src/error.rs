use thiserror::Error;

/// Errors raised by the numerical routines and domain constructors.
///
/// Offending values are carried as `f64` regardless of the scalar type in use.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("time {t} lies before the start time {t0}")]
    Domain { t: f64, t0: f64 },
    #[error("level {level} is not below the threshold {threshold} at time {t}")]
    AboveThreshold { t: f64, level: f64, threshold: f64 },
    #[error("ordering violated: {0}")]
    Ordering(&'static str),
    #[error("no sign change on bracket [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("{routine} did not converge after {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },
    #[error("could not bracket a root below the time cap {cap}")]
    BracketFailure { cap: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("insufficient data: need at least {needed} uncensored observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("malformed sample data at record {record}: {reason}")]
    Format { record: usize, reason: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
