use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrong payload scheme: expected {expected}, got {actual}")]
    WrongScheme {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("truncated {0}")]
    Truncated(&'static str),

    #[error("bad magic: expected \"SOB1\"")]
    BadMagic,

    #[error("malformed payload: {0}")]
    Payload(String),

    #[error("all pixels are masked")]
    EmptyMask,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{0}")]
    Dataset(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
