use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid user-facing configuration. The first field names the offending key.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("degenerate saturated-antenna selection: {0}")]
    DegenerateSelection(String),

    #[error("operation requires {expected} PA model, got {actual}")]
    UnsupportedModel { expected: &'static str, actual: String },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("insufficient precision: {0}")]
    Precision(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
