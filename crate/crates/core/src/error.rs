use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes or an unsupported layer/network configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A linear solve could not be completed for one batch element.
    #[error("numerical error in batch element {batch}: {reason}")]
    Numerical { batch: usize, reason: String },

    /// An operation produced NaN or infinity from finite inputs.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// A parameter received a NaN or infinite gradient.
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    /// Training loss became non-finite.
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    /// Malformed binary payload (image or tensor container).
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("unsupported PNM maxval {0} (only 255 is supported)")]
    UnsupportedMaxval(u32),

    #[error("value {value} at index {index} is outside [0, 1]; clamp before writing")]
    OutOfRange { index: usize, value: f64 },

    #[error("missing files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingFiles(Vec<PathBuf>),

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("invalid manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
