//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by lattice construction, assignment, training, and IO.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or shape disagreement between operands.
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    /// A non-finite value surfaced where finite arithmetic is required.
    #[error("numeric failure in {0}")]
    Numeric(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed file contents (bad magic, bad version).
    #[error("format error: {0}")]
    Format(String),

    /// File or buffer shorter/longer than its header claims.
    #[error("length error: {0}")]
    Length(String),

    /// Problem size beyond a solver's supported capacity.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Invalid caller-provided indices or arguments.
    #[error("input error: {0}")]
    Input(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(context: impl Into<String>, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
