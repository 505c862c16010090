//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by corpus ingestion, message computation, and inference.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An input that carries no usable probability mass.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Mismatched vector or matrix dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An index beyond the valid range (topic, word, or document).
    #[error("index out of range: {0}")]
    Index(String),

    /// A malformed input file, with the 1-based line it was detected on.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An input collection that ended up empty where content is required.
    #[error("empty input: {0}")]
    Empty(String),

    /// Token ids not covered by the model vocabulary.
    #[error("out-of-vocabulary token ids: {0:?}")]
    OutOfVocabulary(Vec<usize>),

    /// A model file that does not match the persisted schema.
    #[error("invalid model: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
