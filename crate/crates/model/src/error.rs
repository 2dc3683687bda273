use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Candle(#[from] candle_core::Error),

    #[error(transparent)]
    Core(#[from] hkcd_core::Error),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),

    #[error("target mask contains a value other than 0 or 1")]
    NonBinaryTarget,

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("invalid loss config: {0}")]
    InvalidLoss(String),

    #[error("checkpoint config does not match the requested model config")]
    ConfigMismatch,

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
