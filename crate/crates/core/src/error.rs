use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid model: {}", .0.join("; "))]
    InvalidModel(Vec<String>),

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite derivative with respect to parameter {index} ({name})")]
    NonFiniteDerivative { index: usize, name: &'static str },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is not positive semidefinite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("problem size {size} exceeds the limit of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
