//! The two encoders of each branch: a plain ViT image encoder with CLIP
//! parameter names, and a trainable hierarchical transformer.

use candle_core::Tensor;

use crate::attention::MultiHeadAttention;
use crate::config::{ModelConfig, PretrainedConfig};
use crate::error::{ModelError, Result};
use crate::ops::{gelu, quick_gelu, resize_bilinear, to_map, to_tokens, Conv, LayerNorm, Linear};
use crate::params::{Init, ParamStore};

pub const VISION_PREFIX: &str = "vision_model.";

#[derive(Debug, Clone)]
struct ClipLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

/// ViT encoder whose parameters are named like a Hugging Face CLIP vision
/// model, so `vision_model.*` tensors from such an export load directly.
#[derive(Debug, Clone)]
pub struct VisionTower {
    class_embedding: Tensor,
    patch_embedding: Conv,
    position_embedding: Tensor,
    pre_ln: LayerNorm,
    layers: Vec<ClipLayer>,
    taps: Vec<usize>,
    grid: usize,
    frozen: bool,
}

impl VisionTower {
    pub fn new(store: &mut ParamStore, cfg: &PretrainedConfig, frozen: bool) -> Result<Self> {
        let w = cfg.width;
        let p = format!("{VISION_PREFIX}embeddings");
        let grid = cfg.image_size / cfg.patch_size;
        let class_embedding = store
            .create(&format!("{p}.class_embedding"), &[w], Init::Normal { std: 0.02 })?
            .as_tensor()
            .clone();
        let patch_embedding = Conv::new(store, &format!("{p}.patch_embedding"), 3, w, cfg.patch_size, cfg.patch_size, 0, false, false)?;
        let position_embedding = store
            .create(&format!("{p}.position_embedding.weight"), &[grid * grid + 1, w], Init::Normal { std: 0.02 })?
            .as_tensor()
            .clone();
        let pre_ln = LayerNorm::new(store, &format!("{VISION_PREFIX}pre_layrnorm"), w)?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let l = format!("{VISION_PREFIX}encoder.layers.{i}");
            let sa = format!("{l}.self_attn");
            let attn = MultiHeadAttention {
                q: Linear::new(store, &format!("{sa}.q_proj"), w, w, false)?,
                k: Linear::new(store, &format!("{sa}.k_proj"), w, w, false)?,
                v: Linear::new(store, &format!("{sa}.v_proj"), w, w, false)?,
                o: Linear::new(store, &format!("{sa}.out_proj"), w, w, false)?,
                heads: cfg.heads,
                reduction: None,
            };
            layers.push(ClipLayer {
                ln1: LayerNorm::new(store, &format!("{l}.layer_norm1"), w)?,
                attn,
                ln2: LayerNorm::new(store, &format!("{l}.layer_norm2"), w)?,
                fc1: Linear::new(store, &format!("{l}.mlp.fc1"), w, 4 * w, false)?,
                fc2: Linear::new(store, &format!("{l}.mlp.fc2"), 4 * w, w, false)?,
            });
        }
        Ok(Self {
            class_embedding,
            patch_embedding,
            position_embedding,
            pre_ln,
            layers,
            taps: cfg.tap_layers.clone(),
            grid,
            frozen,
        })
    }

    fn positions(&self, gh: usize, gw: usize) -> Result<Tensor> {
        if (gh, gw) == (self.grid, self.grid) {
            return Ok(self.position_embedding.unsqueeze(0)?);
        }
        let (n, w) = self.position_embedding.dims2()?;
        let cls = self.position_embedding.narrow(0, 0, 1)?;
        let table = self.position_embedding.narrow(0, 1, n - 1)?.unsqueeze(0)?;
        let grid = resize_bilinear(&to_map(&table, self.grid, self.grid)?, gh, gw)?;
        let grid = to_tokens(&grid)?.squeeze(0)?;
        Ok(Tensor::cat(&[&cls, &grid], 0)?.reshape((1, gh * gw + 1, w))?)
    }

    /// Patch-token maps `(B, width, H/p, W/p)` after each tap layer.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (b, _, _, _) = x.dims4()?;
        let patches = self.patch_embedding.forward(x)?;
        let (_, w, gh, gw) = patches.dims4()?;
        if gh == 0 || gw == 0 {
            return Err(ModelError::ShapeMismatch(format!("input {:?} smaller than one patch", x.dims())));
        }
        let cls = self.class_embedding.reshape((1, 1, w))?.broadcast_as((b, 1, w))?;
        let tokens = Tensor::cat(&[&cls, &to_tokens(&patches)?], 1)?;
        let mut h = self.pre_ln.forward(&tokens.broadcast_add(&self.positions(gh, gw)?)?)?;
        let mut taps = Vec::with_capacity(self.taps.len());
        let last = self.taps.iter().copied().max().unwrap_or(0);
        for (i, layer) in self.layers.iter().enumerate().take(last) {
            let n = layer.ln1.forward(&h)?;
            h = (&h + layer.attn.forward(&n, &n, (1, gh * gw + 1))?)?;
            let n = layer.ln2.forward(&h)?;
            h = (&h + layer.fc2.forward(&quick_gelu(&layer.fc1.forward(&n)?)?)?)?;
            for (slot, &t) in self.taps.iter().enumerate() {
                if t == i + 1 {
                    taps.push((slot, h.narrow(1, 1, gh * gw)?));
                }
            }
        }
        taps.sort_by_key(|(slot, _)| *slot);
        taps.into_iter()
            .map(|(_, t)| {
                let m = to_map(&t, gh, gw)?;
                Ok(if self.frozen { m.detach() } else { m })
            })
            .collect()
    }
}

/// Pre-norm transformer block with spatially reduced attention.
#[derive(Debug, Clone)]
pub struct Block {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    fc1: Linear,
    fc2: Linear,
}

impl Block {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, sr_ratio: usize, mlp_ratio: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.norm1"), dim)?,
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, sr_ratio, false)?,
            ln2: LayerNorm::new(store, &format!("{name}.norm2"), dim)?,
            fc1: Linear::new(store, &format!("{name}.mlp.fc1"), dim, dim * mlp_ratio, false)?,
            fc2: Linear::new(store, &format!("{name}.mlp.fc2"), dim * mlp_ratio, dim, false)?,
        })
    }

    /// Tokens `(B, h·w, C)` in, same shape out.
    pub fn forward(&self, x: &Tensor, hw: (usize, usize)) -> Result<Tensor> {
        let n = self.ln1.forward(x)?;
        let x = (x + self.attn.forward(&n, &n, hw)?)?;
        let n = self.ln2.forward(&x)?;
        Ok((&x + self.fc2.forward(&gelu(&self.fc1.forward(&n)?)?)?)?)
    }

    pub fn forward_map(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        to_map(&self.forward(&to_tokens(x)?, (h, w))?, h, w)
    }
}

/// One stage of the trainable hierarchical encoder: overlapping patch
/// embedding, transformer blocks, closing layer norm.
#[derive(Debug, Clone)]
pub struct Stage {
    embed: Conv,
    embed_norm: LayerNorm,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

impl Stage {
    pub fn new(store: &mut ParamStore, cfg: &ModelConfig, s: usize) -> Result<Self> {
        let name = format!("encoder.stages.{s}");
        let dim = cfg.embed_dims[s];
        let embed = if s == 0 {
            Conv::new(store, &format!("{name}.patch_embed.proj"), 3, dim, 7, 4, 3, true, false)?
        } else {
            Conv::new(store, &format!("{name}.patch_embed.proj"), cfg.embed_dims[s - 1], dim, 3, 2, 1, true, false)?
        };
        let blocks = (0..cfg.depths[s])
            .map(|j| Block::new(store, &format!("{name}.blocks.{j}"), dim, cfg.num_heads[s], cfg.sr_ratios[s], cfg.mlp_ratio))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            embed,
            embed_norm: LayerNorm::new(store, &format!("{name}.patch_embed.norm"), dim)?,
            blocks,
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let m = self.embed.forward(x)?;
        let (_, _, h, w) = m.dims4()?;
        let mut t = self.embed_norm.forward(&to_tokens(&m)?)?;
        for b in &self.blocks {
            t = b.forward(&t, (h, w))?;
        }
        to_map(&self.norm.forward(&t)?, h, w)
    }
}
