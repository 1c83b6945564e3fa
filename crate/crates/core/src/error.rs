use thiserror::Error;

/// Errors produced by the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed CSV input; `line` is the 1-based line number in the source.
    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },

    /// A value violates a domain invariant (range, ordering, duplicates).
    #[error("{0}")]
    Validation(String),

    /// Train/test split could not be performed as requested.
    #[error("{0}")]
    Split(String),

    /// Feature construction failed (series too short, bad spec, ...).
    #[error("{0}")]
    Feature(String),

    /// Input has the wrong number of columns for the model or operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Invalid training or model configuration.
    #[error("{0}")]
    Config(String),

    /// Training aborted: a loss or gradient became non-finite.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Model file could not be written, read, or decoded.
    #[error("model file: {0}")]
    Persist(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
