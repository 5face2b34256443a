use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("design region is empty: {0}")]
    EmptyRegion(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rejected incumbent hint: {0}")]
    BadHint(String),

    #[error("limit exceeded: {0}")]
    Limit(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: impl Into<String>, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context: context.into(),
            expected,
            actual,
        });
    }
    Ok(())
}
