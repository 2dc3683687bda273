//! Feature fusion of the image-encoder features `h_c` with the trainable
//! transformer features `h_f`.

use candle_core::Tensor;

use crate::attention::MultiHeadAttention;
use crate::config::HvMode;
use crate::error::{ModelError, Result};
use crate::ops::{gelu, to_map, to_tokens, Conv, LayerNorm};
use crate::params::ParamStore;

/// conv3×3 → GELU → conv3×3 → GELU → conv3×3, width-preserving.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    convs: [Conv; 3],
}

impl ConvBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, zero_last: bool) -> Result<Self> {
        let mk = |store: &mut ParamStore, i: usize, zero: bool| Conv::new(store, &format!("{name}.{i}"), dim, dim, 3, 1, 1, true, zero);
        Ok(Self {
            convs: [mk(store, 0, false)?, mk(store, 1, false)?, mk(store, 2, zero_last)?],
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = gelu(&self.convs[0].forward(x)?)?;
        let x = gelu(&self.convs[1].forward(&x)?)?;
        self.convs[2].forward(&x)
    }
}

/// Every intermediate of one fusion, all NCHW and shaped like `h_f`.
#[derive(Debug, Clone)]
pub struct FusionIntermediates {
    pub attention: Tensor,
    pub h_k: Tensor,
    pub h_l: Tensor,
    pub h_v: Tensor,
    pub h_t: Tensor,
}

#[derive(Debug, Clone)]
pub struct Ffm {
    attn: MultiHeadAttention,
    norm_c: LayerNorm,
    cnn_k: ConvBlock,
    norm_l: LayerNorm,
    cnn_t: ConvBlock,
    hv_mode: HvMode,
}

impl Ffm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, sr_ratio: usize, hv_mode: HvMode, zero_init: bool) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, sr_ratio, zero_init)?,
            norm_c: LayerNorm::new(store, &format!("{name}.norm_c"), dim)?,
            cnn_k: ConvBlock::new(store, &format!("{name}.cnn_k"), dim, zero_init)?,
            norm_l: LayerNorm::new(store, &format!("{name}.norm_l"), dim)?,
            cnn_t: ConvBlock::new(store, &format!("{name}.cnn_t"), dim, zero_init)?,
            hv_mode,
        })
    }

    /// Fuses `h_c` into `h_f`, both `(B, C, H, W)`.
    pub fn forward(&self, h_c: &Tensor, h_f: &Tensor) -> Result<FusionIntermediates> {
        if h_c.dims() != h_f.dims() || h_f.rank() != 4 {
            return Err(ModelError::ShapeMismatch(format!("fusion h_c {:?} vs h_f {:?}", h_c.dims(), h_f.dims())));
        }
        let (_, _, h, w) = h_f.dims4()?;
        let attention = to_map(&self.attn.forward(&to_tokens(h_f)?, &to_tokens(h_c)?, (h, w))?, h, w)?;
        let h_k = (self.cnn_k.forward(&self.norm_c.forward_map(h_c)?)? + h_c)?;
        let h_l = ((h_f + &h_k)? + &attention)?;
        let h_v = match self.hv_mode {
            HvMode::Attention => attention.clone(),
            HvMode::Knowledge => h_k.clone(),
        };
        // Summed as (h_f + h_f) + h_k + A + h_v + CNN(Norm(h_l)), which is
        // h_l + h_v + h_f + CNN(Norm(h_l)) reassociated so that zeroed
        // submodules reduce it to exactly 2·h_f + h_c.
        let h_t = ((((h_f + h_f)? + &h_k)? + &attention)? + &h_v)?;
        let h_t = (h_t + self.cnn_t.forward(&self.norm_l.forward_map(&h_l)?)?)?;
        Ok(FusionIntermediates {
            attention,
            h_k,
            h_l,
            h_v,
            h_t,
        })
    }
}
