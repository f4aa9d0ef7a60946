use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },

    #[error("{what} = {value} is outside {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular parameterization conversion at t = {t}: {reason}")]
    SingularConversion { t: f64, reason: &'static str },

    #[error("degenerate step: {0}")]
    DegenerateStep(String),

    #[error("multistep history missing at step {0}")]
    MissingHistory(usize),

    #[error("singular corrector system: {0}")]
    SingularSystem(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid error series: {0}")]
    InvalidSeries(String),

    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },

    #[error("malformed results file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(what: &'static str, value: f64, domain: impl Into<String>) -> Error {
    Error::Domain {
        what,
        value,
        domain: domain.into(),
    }
}
