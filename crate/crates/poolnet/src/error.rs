//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("spatial extent {extent} is not divisible by window {window}")]
    NotDivisible { extent: usize, window: usize },

    #[error("architecture item {item}: {msg}")]
    Build { item: usize, msg: String },

    #[error("unknown architecture name `{0}`")]
    UnknownArch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data format error: {0}")]
    DataFormat(String),

    #[error("class label {0} outside [0, 9]")]
    BadLabel(u8),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
