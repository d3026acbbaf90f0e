use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("line {line}: timestamp {timestamp_ms} ms does not increase on the previous record")]
    TraceOrder { line: usize, timestamp_ms: i64 },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A configuration value violates a type invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible design: {0}")]
    Infeasible(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
