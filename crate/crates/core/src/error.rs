use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("failed to decode {path}: {reason}")]
    DecodeFailure { path: PathBuf, reason: String },

    #[error("dimension mismatch: expected {expected:?} (h, w), got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("empty image: height and width must both be at least 1")]
    EmptyImage,

    #[error("buffer length {actual} does not match {height}x{width}x{channels}")]
    BufferLength {
        height: usize,
        width: usize,
        channels: usize,
        actual: usize,
    },

    #[error("mask contains non-binary value {0}")]
    NonBinaryMask(u8),

    #[error("manifest has no records")]
    EmptyManifest,

    #[error("duplicate pair id in manifest: {0}")]
    DuplicatePairId(String),

    #[error("invalid split ratios {0:?}: must be non-negative and sum to 1")]
    BadRatios(Vec<f64>),

    #[error("crop {crop:?} exceeds image size {image:?}")]
    CropTooLarge {
        crop: (usize, usize),
        image: (usize, usize),
    },

    #[error("invalid augmentation policy: {0}")]
    InvalidPolicy(String),

    #[error("pair {0} is not prepared: poor, good and mask sizes differ")]
    UnpreparedPair(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("confusion counts are all zero")]
    EmptyConfusion,

    #[error("invalid metadata in {path}: {reason}")]
    BadMetadata { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image encoding error: {0}")]
    Encode(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path.into())
        } else {
            Error::Io {
                path: path.into(),
                source,
            }
        }
    }
}
