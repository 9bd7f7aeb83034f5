use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capacity exceeded for {what}: size {size}, limit {limit}")]
    Capacity {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("label mismatch: {0}")]
    LabelMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn capacity(what: &'static str, size: usize, limit: usize) -> Error {
    Error::Capacity { what, size, limit }
}

impl Error {
    /// A copy for reporting the same failure twice. I/O and JSON errors are
    /// carried over by message.
    pub fn duplicate(&self) -> Error {
        match self {
            Error::Capacity { what, size, limit } => capacity(what, *size, *limit),
            Error::LabelMismatch(s) => Error::LabelMismatch(s.clone()),
            Error::DimensionMismatch(s) => Error::DimensionMismatch(s.clone()),
            Error::InvalidArgument(s) => Error::InvalidArgument(s.clone()),
            Error::Numerical(s) => Error::Numerical(s.clone()),
            Error::Overflow(s) => Error::Overflow(s),
            Error::Schema(s) => Error::Schema(s.clone()),
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Json(e) => Error::Schema(e.to_string()),
        }
    }
}

/// Shares a result between several checks.
pub(crate) fn share<T: Clone>(r: &Result<T>) -> Result<T> {
    match r {
        Ok(v) => Ok(v.clone()),
        Err(e) => Err(e.duplicate()),
    }
}
