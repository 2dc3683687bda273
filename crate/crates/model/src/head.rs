//! Bi-temporal change head and multi-scale decoder.

use candle_core::Tensor;

use crate::config::ModelConfig;
use crate::encoder::Block;
use crate::error::{ModelError, Result};
use crate::ops::{gelu, resize_bilinear, Conv};
use crate::params::ParamStore;

/// Per stage: `[poor, good, |poor − good|]` → 1×1 conv → transformer block
/// → 1×1 projection to the decoder width. The projections are upsampled to
/// the first stage's grid, concatenated, fused and classified to one logit,
/// then upsampled to the input size.
#[derive(Debug, Clone)]
pub struct ChangeHead {
    fuse: Vec<Conv>,
    blocks: Vec<Block>,
    proj: Vec<Conv>,
    fuse_all: Conv,
    classifier: Conv,
}

impl ChangeHead {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let (mut fuse, mut blocks, mut proj) = (Vec::new(), Vec::new(), Vec::new());
        for s in 0..cfg.stage_count {
            let c = cfg.embed_dims[s];
            fuse.push(Conv::pointwise(store, &format!("head.fuse.{s}"), 3 * c, c)?);
            blocks.push(Block::new(store, &format!("head.blocks.{s}"), c, cfg.num_heads[s], cfg.sr_ratios[s], cfg.mlp_ratio)?);
            proj.push(Conv::pointwise(store, &format!("head.proj.{s}"), c, cfg.decoder_dim)?);
        }
        let d = cfg.decoder_dim;
        Ok(Self {
            fuse,
            blocks,
            proj,
            fuse_all: Conv::pointwise(store, "head.fuse_all", cfg.stage_count * d, d)?,
            // zeroed, training starts from ŷ = 0.5 everywhere rather than
            // from saturated logits the clamp passes no gradient through
            classifier: Conv::new(store, "head.classifier", d, 1, 1, 1, 0, true, cfg.zero_init_residual)?,
        })
    }

    /// `poor` and `good` hold one fused map per stage; returns `(B, 1, H, W)`.
    pub fn forward(&self, poor: &[Tensor], good: &[Tensor], out_hw: (usize, usize)) -> Result<Tensor> {
        if poor.len() != self.fuse.len() || good.len() != self.fuse.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "head expects {} stages, got {} and {}",
                self.fuse.len(),
                poor.len(),
                good.len()
            )));
        }
        let (_, _, h0, w0) = poor[0].dims4()?;
        let mut scales = Vec::with_capacity(poor.len());
        for s in 0..poor.len() {
            let (p, g) = (&poor[s], &good[s]);
            let diff = (p - g)?.abs()?;
            let x = self.fuse[s].forward(&Tensor::cat(&[p, g, &diff], 1)?)?;
            let x = self.proj[s].forward(&self.blocks[s].forward_map(&x)?)?;
            scales.push(resize_bilinear(&x, h0, w0)?);
        }
        let x = gelu(&self.fuse_all.forward(&Tensor::cat(&scales, 1)?)?)?;
        resize_bilinear(&self.classifier.forward(&x)?, out_hw.0, out_hw.1)
    }
}
