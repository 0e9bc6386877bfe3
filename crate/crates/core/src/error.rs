//! Crate-wide error type. Variants map onto the CLI exit-code contract:
//! `Usage` is a caller mistake (exit 2), everything else is a runtime or
//! data failure (exit 1).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer extents do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// An index or window falls outside its tensor.
    #[error("bounds error: {0}")]
    Bounds(String),
    /// A file does not conform to its declared format.
    #[error("format error: {0}")]
    Format(String),
    /// The operation was invoked with arguments it cannot honor.
    #[error("usage error: {0}")]
    Usage(String),
    /// A non-finite value surfaced where a finite one is required.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("invalid JSON: {e}"))
    }
}
