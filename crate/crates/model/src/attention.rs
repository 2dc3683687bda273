use candle_core::{Tensor, D};

use crate::error::{ModelError, Result};
use crate::ops::{to_map, to_tokens, Conv, LayerNorm, Linear};
use crate::params::ParamStore;

/// Softmax attention over already-projected `(B, N, C)` tensors, split into
/// `heads` heads of width `C / heads`. Returns the concatenated head outputs
/// `(B, Nq, C)` and the attention weights `(B, heads, Nq, Nk)`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> Result<(Tensor, Tensor)> {
    let (b, nq, c) = q.dims3()?;
    let (bk, nk, ck) = k.dims3()?;
    if v.dims() != k.dims() || bk != b || ck != c {
        return Err(ModelError::ShapeMismatch(format!(
            "attention q {:?}, k {:?}, v {:?}",
            q.dims(),
            k.dims(),
            v.dims()
        )));
    }
    if heads == 0 || c % heads != 0 {
        return Err(ModelError::ShapeMismatch(format!("width {c} not divisible by {heads} heads")));
    }
    let d = c / heads;
    let split = |t: &Tensor, n: usize| -> Result<Tensor> { Ok(t.reshape((b, n, heads, d))?.transpose(1, 2)?.contiguous()?) };
    let (qh, kh, vh) = (split(q, nq)?, split(k, nk)?, split(v, nk)?);
    let logits = (qh.matmul(&kh.t()?)? * (1.0 / (d as f64).sqrt()))?;
    let weights = candle_nn::ops::softmax(&logits, D::Minus1)?;
    let out = weights.matmul(&vh)?.transpose(1, 2)?.contiguous()?.reshape((b, nq, c))?;
    Ok((out, weights))
}

/// Multi-head attention with input and output projections. With a spatial
/// reduction ratio above 1, keys and values come from a strided convolution
/// of the key/value map followed by layer normalization.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub reduction: Option<(Conv, LayerNorm)>,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, sr_ratio: usize, zero_out: bool) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(ModelError::InvalidConfig(format!("{name}: width {dim} not divisible by {heads} heads")));
        }
        let reduction = if sr_ratio > 1 {
            Some((
                Conv::new(store, &format!("{name}.sr"), dim, dim, sr_ratio, sr_ratio, 0, true, false)?,
                LayerNorm::new(store, &format!("{name}.sr_norm"), dim)?,
            ))
        } else {
            None
        };
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, false)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, false)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, false)?,
            o: Linear::new(store, &format!("{name}.o"), dim, dim, zero_out)?,
            heads,
            reduction,
        })
    }

    /// `query` is `(B, N, C)`; `kv` is `(B, M, C)` laid out on a
    /// `kv_hw.0 × kv_hw.1` grid (the grid only matters with reduction).
    pub fn forward(&self, query: &Tensor, kv: &Tensor, kv_hw: (usize, usize)) -> Result<Tensor> {
        self.forward_with_weights(query, kv, kv_hw).map(|(o, _)| o)
    }

    pub fn forward_with_weights(&self, query: &Tensor, kv: &Tensor, kv_hw: (usize, usize)) -> Result<(Tensor, Tensor)> {
        let kv = match &self.reduction {
            Some((conv, norm)) => {
                let map = to_map(kv, kv_hw.0, kv_hw.1)?;
                norm.forward(&to_tokens(&conv.forward(&map)?)?)?
            }
            None => kv.clone(),
        };
        let (out, w) = scaled_dot_attention(&self.q.forward(query)?, &self.k.forward(&kv)?, &self.v.forward(&kv)?, self.heads)?;
        Ok((self.o.forward(&out)?, w))
    }
}
