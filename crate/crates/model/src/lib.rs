//! Siamese change-detection network, its loss, and checkpoints.

pub mod attention;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod ffm;
pub mod gradcheck;
pub mod head;
pub mod loss;
pub mod model;
pub mod ops;
pub mod params;

pub use attention::{scaled_dot_attention, MultiHeadAttention};
pub use config::{HvMode, ModelConfig, PretrainedConfig};
pub use data::{black_image, blackout_good, blackout_poor, logits_to_masks, PairBatch};
pub use error::{ModelError, Result};
pub use ffm::{Ffm, FusionIntermediates};
pub use loss::{weighted_cross_entropy, LossConfig};
pub use model::{Branch, ForwardTrace, Hcdn, StageFeature};
pub use params::ParamStore;

pub use candle_core::{DType, Tensor, Var};
