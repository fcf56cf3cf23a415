use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("normalizing sum diverges: {0}")]
    DivergentMass(String),
    #[error("unsupported law family: {0}")]
    UnsupportedFamily(String),
    #[error("numeric overflow: {0}")]
    Overflow(String),
    #[error("no typical time: {0}")]
    NoTypicalTime(String),
    #[error("requested accuracy {requested:e} not reached (achieved {achieved:e})")]
    Accuracy { requested: f64, achieved: f64 },
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("walk is not transient: {0}")]
    TransienceViolation(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
