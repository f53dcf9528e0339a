use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A header or column set does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell or row violates a dataset invariant.
    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },

    /// Datasets share no common dates or are otherwise unalignable.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix or series dimensions do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// Training preconditions not met.
    #[error("training error: {0}")]
    Training(String),

    /// Too few observations for the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A message was addressed to an unregistered endpoint or sent out of round order.
    #[error("routing error: {0}")]
    Routing(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
