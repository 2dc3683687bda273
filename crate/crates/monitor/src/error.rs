use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("cannot read frame source {path}: {reason}")]
    UnreadableSource { path: PathBuf, reason: String },

    #[error("cannot load model: {0}")]
    ModelLoadFailure(String),

    #[error("sample_interval must be at least 1")]
    InvalidInterval,

    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),

    #[error("sink unavailable: {0}")]
    SinkUnavailable(String),

    #[error(transparent)]
    Core(#[from] hkcd_core::Error),

    #[error(transparent)]
    Harness(#[from] hkcd_harness::HarnessError),
}

pub type Result<T, E = MonitorError> = std::result::Result<T, E>;
