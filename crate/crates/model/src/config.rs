use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Which tensor stands in for the undefined `h_v` term of the second fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvMode {
    /// `h_v = A`, the cross-attention output.
    #[default]
    Attention,
    /// `h_v = h_k`, the convolutional knowledge branch.
    Knowledge,
}

/// Image encoder laid out like a CLIP vision tower, so its weights can be
/// read from a Hugging Face `vision_model.*` safetensors export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainedConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub patch_size: usize,
    /// Side of the square image the position table was trained for.
    pub image_size: usize,
    /// 1-based encoder layers whose outputs feed each stage.
    pub tap_layers: Vec<usize>,
}

impl Default for PretrainedConfig {
    fn default() -> Self {
        Self {
            width: 768,
            layers: 12,
            heads: 12,
            patch_size: 16,
            image_size: 224,
            tap_layers: vec![4, 8, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub stage_count: usize,
    /// Channel width of each stage.
    pub embed_dims: Vec<usize>,
    pub num_heads: Vec<usize>,
    /// Transformer blocks per stage in the trainable branch.
    pub depths: Vec<usize>,
    /// Key/value spatial reduction factor per stage.
    pub sr_ratios: Vec<usize>,
    pub mlp_ratio: usize,
    pub decoder_dim: usize,
    /// Square training input side.
    pub input_size: usize,
    pub hv_mode: HvMode,
    /// Zero the last layer of each fusion CNN, the fusion attention output
    /// projection and the change classifier at initialization.
    pub zero_init_residual: bool,
    pub pretrained: PretrainedConfig,
    /// Exclude the image encoder from optimization.
    pub pretrained_branch_frozen: bool,
    /// Safetensors file with `vision_model.*` weights for the image
    /// encoder; random weights are used when absent.
    pub pretrained_weights: Option<String>,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Three stages at 1/4, 1/8 and 1/16 with a ViT-B/16 image encoder.
    pub fn paper() -> Self {
        Self {
            stage_count: 3,
            embed_dims: vec![64, 128, 320],
            num_heads: vec![1, 2, 5],
            depths: vec![2, 2, 2],
            sr_ratios: vec![8, 4, 2],
            mlp_ratio: 4,
            decoder_dim: 256,
            input_size: 256,
            hv_mode: HvMode::Attention,
            zero_init_residual: true,
            pretrained: PretrainedConfig::default(),
            pretrained_branch_frozen: true,
            pretrained_weights: None,
            init_seed: 0,
        }
    }

    /// Width-64 variant for single-machine runs.
    pub fn desk() -> Self {
        Self {
            stage_count: 3,
            embed_dims: vec![64, 64, 64],
            num_heads: vec![2, 2, 2],
            depths: vec![1, 1, 1],
            sr_ratios: vec![4, 2, 1],
            mlp_ratio: 2,
            decoder_dim: 64,
            input_size: 256,
            hv_mode: HvMode::Attention,
            zero_init_residual: true,
            pretrained: PretrainedConfig {
                width: 64,
                layers: 4,
                heads: 4,
                patch_size: 8,
                image_size: 256,
                tap_layers: vec![2, 3, 4],
            },
            pretrained_branch_frozen: true,
            pretrained_weights: None,
            init_seed: 0,
        }
    }

    /// Two stages of width 8, for gradient checks and unit tests.
    pub fn toy() -> Self {
        Self {
            stage_count: 2,
            embed_dims: vec![8, 8],
            num_heads: vec![2, 2],
            depths: vec![1, 1],
            sr_ratios: vec![2, 1],
            mlp_ratio: 2,
            decoder_dim: 8,
            input_size: 16,
            hv_mode: HvMode::Attention,
            zero_init_residual: true,
            pretrained: PretrainedConfig {
                width: 8,
                layers: 2,
                heads: 2,
                patch_size: 4,
                image_size: 16,
                tap_layers: vec![1, 2],
            },
            pretrained_branch_frozen: true,
            pretrained_weights: None,
            init_seed: 0,
        }
    }

    /// Total downsampling of stage `s` relative to the input.
    pub fn stage_stride(&self, s: usize) -> usize {
        4 << s
    }

    /// Equality ignoring where the encoder weights were read from.
    pub fn same_architecture(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self {
            pretrained_weights: None,
            ..c.clone()
        };
        strip(self) == strip(other)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        let n = self.stage_count;
        if n == 0 {
            return bad("stage_count must be at least 1".into());
        }
        for (name, len) in [
            ("embed_dims", self.embed_dims.len()),
            ("num_heads", self.num_heads.len()),
            ("depths", self.depths.len()),
            ("sr_ratios", self.sr_ratios.len()),
            ("pretrained.tap_layers", self.pretrained.tap_layers.len()),
        ] {
            if len != n {
                return bad(format!("{name} has {len} entries, expected stage_count = {n}"));
            }
        }
        for s in 0..n {
            let (c, h) = (self.embed_dims[s], self.num_heads[s]);
            if c == 0 || h == 0 || c % h != 0 {
                return bad(format!("stage {s}: embed_dim {c} not divisible by num_heads {h}"));
            }
            if self.sr_ratios[s] == 0 {
                return bad(format!("stage {s}: sr_ratio must be at least 1"));
            }
        }
        let p = &self.pretrained;
        if p.width == 0 || p.heads == 0 || p.width % p.heads != 0 {
            return bad(format!("pretrained width {} not divisible by heads {}", p.width, p.heads));
        }
        if p.patch_size == 0 || p.image_size < p.patch_size {
            return bad("pretrained patch_size must be in 1..=image_size".into());
        }
        if let Some(&l) = p.tap_layers.iter().find(|&&l| l == 0 || l > p.layers) {
            return bad(format!("tap layer {l} outside 1..={}", p.layers));
        }
        if self.mlp_ratio == 0 || self.decoder_dim == 0 {
            return bad("mlp_ratio and decoder_dim must be positive".into());
        }
        let stride = self.stage_stride(n - 1);
        if self.input_size % stride != 0 {
            return bad(format!("input_size {} must be a multiple of {stride}", self.input_size));
        }
        Ok(())
    }
}
