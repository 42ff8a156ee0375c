use thiserror::Error;

/// Errors raised by the numerical kernels, runners and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A matrix that must be inverted is singular or too badly conditioned.
    #[error("ill-conditioned matrix: condition number {condition:e} exceeds {limit:e}")]
    Condition { condition: f64, limit: f64 },

    #[error("time {t} is outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("time {t} is not a grid point (h = {h})")]
    OffGrid { t: f64, h: f64 },

    /// CSV parse failure. `row` is the 1-based line number, header included.
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("{0}")]
    Schedule(String),

    #[error("arm set: {0}")]
    ArmSet(String),

    /// Configuration error; `path` points at the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
