//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/vector shape does not match the network or dataset contract.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// A value is outside its mathematical domain (labels, head indices, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated an API precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Remote oracle transport failure. `completed` holds the labels obtained
    /// before the failure, in request order; the ledger counts exactly those.
    #[error("oracle transport failed after {} of {attempted} queries: {message}", completed.len())]
    Transport {
        completed: Vec<usize>,
        attempted: usize,
        message: String,
    },

    /// A binary file does not match its format; `offset` is the byte position.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Non-finite values or a diverged iteration in a numeric routine.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
