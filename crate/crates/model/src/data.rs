//! Conversions between prepared pairs and model tensors, and the blackout
//! transforms.

use candle_core::{DType, Device, Tensor};
use hkcd_core::augment::{NormalizationConstants, NormalizedPair};
use ndarray::Array3;

use crate::error::{ModelError, Result};

/// A batch of pairs as NCHW tensors; `mask` is `(B, 1, H, W)` of 0/1.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub ids: Vec<String>,
    pub poor: Tensor,
    pub good: Tensor,
    pub mask: Tensor,
}

fn hwc_to_chw(a: &Array3<f32>) -> Vec<f32> {
    let (h, w, c) = a.dim();
    let mut out = Vec::with_capacity(h * w * c);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.push(a[[y, x, ch]]);
            }
        }
    }
    out
}

impl PairBatch {
    pub fn from_pairs(pairs: &[NormalizedPair], dtype: DType) -> Result<Self> {
        let first = pairs.first().ok_or_else(|| ModelError::ShapeMismatch("empty batch".into()))?;
        let (h, w, _) = first.poor.dim();
        let (mut poor, mut good, mut mask) = (Vec::new(), Vec::new(), Vec::new());
        for p in pairs {
            if p.poor.dim() != (h, w, 3) || p.good.dim() != (h, w, 3) || p.mask.dims() != (h, w) {
                return Err(ModelError::ShapeMismatch(format!("pair {} differs from {h}x{w}", p.pair_id)));
            }
            poor.extend(hwc_to_chw(&p.poor));
            good.extend(hwc_to_chw(&p.good));
            mask.extend(p.mask.as_raw().iter().map(|&v| if v != 0 { 1f32 } else { 0.0 }));
        }
        let b = pairs.len();
        let dev = Device::Cpu;
        Ok(Self {
            ids: pairs.iter().map(|p| p.pair_id.clone()).collect(),
            poor: Tensor::from_vec(poor, (b, 3, h, w), &dev)?.to_dtype(dtype)?,
            good: Tensor::from_vec(good, (b, 3, h, w), &dev)?.to_dtype(dtype)?,
            mask: Tensor::from_vec(mask, (b, 1, h, w), &dev)?.to_dtype(dtype)?,
        })
    }
}

/// Normalized all-black `(H, W, 3)` image.
pub fn black_image(h: usize, w: usize, consts: &NormalizationConstants) -> Array3<f32> {
    let level = consts.black_level();
    Array3::from_shape_fn((h, w, 3), |(_, _, c)| level[c])
}

/// Replaces the good image with a normalized black image.
pub fn blackout_good(pair: &NormalizedPair, consts: &NormalizationConstants) -> NormalizedPair {
    let (h, w, _) = pair.good.dim();
    NormalizedPair {
        good: black_image(h, w, consts),
        ..pair.clone()
    }
}

/// Replaces the poor image with a normalized black image.
pub fn blackout_poor(pair: &NormalizedPair, consts: &NormalizationConstants) -> NormalizedPair {
    let (h, w, _) = pair.poor.dim();
    NormalizedPair {
        poor: black_image(h, w, consts),
        ..pair.clone()
    }
}

/// Per-pixel `logit > 0`, i.e. probability above one half, as 0/1 rows of
/// `(H, W)` for each batch element.
pub fn logits_to_masks(logits: &Tensor) -> Result<Vec<Vec<u8>>> {
    let (b, _, h, w) = logits.dims4()?;
    let flat = logits.to_dtype(DType::F32)?.reshape((b, h * w))?.to_vec2::<f32>()?;
    Ok(flat.into_iter().map(|row| row.into_iter().map(|v| u8::from(v > 0.0)).collect()).collect())
}
