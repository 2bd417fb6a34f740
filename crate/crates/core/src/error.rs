use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("cluster index {index} out of range for {clusters} clusters")]
    Index { index: usize, clusters: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
