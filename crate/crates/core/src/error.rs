use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A dense construction would exceed the configured size limit.
    #[error("resource guard: {what} of size {size} exceeds limit {limit}")]
    ResourceGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("initial state has no usable overlap with the propagator's eigenoperators")]
    NoUsableOverlap,

    #[error("quantization convention error: {0}")]
    Convention(String),

    #[error("cannot take the logarithm of series value at index {index} ({value})")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
