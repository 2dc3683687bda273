//! Differentiable building blocks composed from candle primitives.

use candle_core::{DType, Device, Tensor, Var, D};

use crate::error::{ModelError, Result};
use crate::params::{Init, ParamStore};

pub const LN_EPS: f64 = 1e-5;

/// `x·Wᵀ + b` over the last dimension.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, zero: bool) -> Result<Self> {
        let init = if zero {
            Init::Zeros
        } else {
            Init::Scaled { fan_in: d_in, gain: 1.0 }
        };
        Ok(Self {
            weight: store.create(&format!("{name}.weight"), &[d_out, d_in], init)?,
            bias: Some(store.create(&format!("{name}.bias"), &[d_out], Init::Zeros)?),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.as_tensor().t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b.as_tensor())?,
            None => y,
        })
    }
}

/// 2-D convolution on NCHW tensors.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        zero: bool,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let init = if zero {
            Init::Zeros
        } else {
            Init::Scaled {
                fan_in,
                gain: std::f64::consts::SQRT_2,
            }
        };
        let weight = store.create(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], init)?;
        let bias = if bias {
            Some(store.create(&format!("{name}.bias"), &[c_out], Init::Zeros)?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn pointwise(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Self::new(store, name, c_in, c_out, 1, 1, 0, true, false)
    }

    /// Convolution as one matrix product over gathered patches. candle's
    /// native conv2d backward is several times slower than its forward on
    /// CPU; this form differentiates through matmul, pad and narrow only.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = x.dims4()?;
        let (c_out, c_in, k, _) = self.weight.dims4()?;
        if c != c_in {
            return Err(ModelError::ShapeMismatch(format!("conv expects {c_in} channels, got {c}")));
        }
        let (s, p) = (self.stride, self.padding);
        if h + 2 * p < k || w + 2 * p < k {
            return Err(ModelError::ShapeMismatch(format!("{h}x{w} input smaller than {k}x{k} kernel")));
        }
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        let cols = if k == 1 && s == 1 && p == 0 {
            x.reshape((b, c, h * w))?
        } else {
            // pad so that every tap can take ho·s rows and wo·s columns
            let xp = x
                .pad_with_zeros(2, p, (k - 1 + ho * s).saturating_sub(h + p))?
                .pad_with_zeros(3, p, (k - 1 + wo * s).saturating_sub(w + p))?;
            let mut taps = Vec::with_capacity(k * k);
            for dy in 0..k {
                for dx in 0..k {
                    let t = xp.narrow(2, dy, ho * s)?.narrow(3, dx, wo * s)?;
                    let t = if s > 1 {
                        t.contiguous()?.reshape((b, c, ho, s, wo, s))?.narrow(3, 0, 1)?.narrow(5, 0, 1)?
                    } else {
                        t
                    };
                    taps.push(t.contiguous()?.reshape((b, c, 1, ho * wo))?);
                }
            }
            Tensor::cat(&taps, 2)?.reshape((b, c * k * k, ho * wo))?
        };
        let wm = self.weight.as_tensor().reshape((c_out, c_in * k * k))?;
        let y = wm.broadcast_matmul(&cols)?;
        let y = match &self.bias {
            Some(bias) => y.broadcast_add(&bias.as_tensor().reshape((1, c_out, 1))?)?,
            None => y,
        };
        Ok(y.reshape((b, c_out, ho, wo))?)
    }
}

/// Layer normalization over the last dimension.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub weight: Var,
    pub bias: Var,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        Ok(Self {
            weight: store.create(&format!("{name}.weight"), &[dim], Init::Ones)?,
            bias: store.create(&format!("{name}.bias"), &[dim], Init::Zeros)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        layer_norm(x, self.weight.as_tensor(), self.bias.as_tensor())
    }

    /// Normalizes an NCHW map over its channels.
    pub fn forward_map(&self, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4()?;
        to_map(&self.forward(&to_tokens(x)?)?, h, w)
    }
}

pub fn layer_norm(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let xc = x.broadcast_sub(&mean)?;
    let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
    let y = xc.broadcast_div(&(var + LN_EPS)?.sqrt()?)?;
    Ok(y.broadcast_mul(weight)?.broadcast_add(bias)?)
}

/// `x·Φ(x)` built from `erf`. candle's fused GELU backward rounds
/// 1/√(2π) to six digits, which shows up in 64-bit gradient checks.
pub fn gelu(x: &Tensor) -> Result<Tensor> {
    let cdf = ((x * std::f64::consts::FRAC_1_SQRT_2)?.erf()? + 1.0)?;
    Ok((x * cdf)?.affine(0.5, 0.0)?)
}

/// `x·σ(1.702x)`, the activation of CLIP's MLPs.
pub fn quick_gelu(x: &Tensor) -> Result<Tensor> {
    Ok((x * candle_nn::ops::sigmoid(&(x * 1.702)?)?)?)
}

/// NCHW → (B, H·W, C).
pub fn to_tokens(x: &Tensor) -> Result<Tensor> {
    Ok(x.flatten_from(2)?.transpose(1, 2)?.contiguous()?)
}

/// (B, H·W, C) → NCHW.
pub fn to_map(t: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    let (b, n, c) = t.dims3()?;
    if n != h * w {
        return Err(ModelError::ShapeMismatch(format!("{n} tokens cannot form a {h}x{w} map")));
    }
    Ok(t.transpose(1, 2)?.contiguous()?.reshape((b, c, h, w))?)
}

/// Row-stochastic matrix resampling `n_in` samples to `n_out` with linear
/// interpolation on half-pixel centres (edges clamped).
pub fn interp_matrix(n_out: usize, n_in: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let mut m = vec![0f64; n_out * n_in];
    let scale = n_in as f64 / n_out as f64;
    for o in 0..n_out {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let l = src - i0 as f64;
        m[o * n_in + i0] += 1.0 - l;
        m[o * n_in + i1] += l;
    }
    Ok(Tensor::from_vec(m, (n_out, n_in), device)?.to_dtype(dtype)?)
}

/// Bilinear resize of an NCHW tensor, expressed as two matrix products so
/// it stays differentiable.
pub fn resize_bilinear(x: &Tensor, h_out: usize, w_out: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (h_out, w_out) {
        return Ok(x.clone());
    }
    let my = interp_matrix(h_out, h, x.dtype(), x.device())?;
    let mx = interp_matrix(w_out, w, x.dtype(), x.device())?;
    let y = my.broadcast_matmul(x)?;
    Ok(y.broadcast_matmul(&mx.t()?)?)
}

/// Fails with [`ModelError::NonFiniteActivation`] if any element is NaN or
/// infinite.
pub fn ensure_finite(x: &Tensor, what: &str) -> Result<()> {
    let s = x.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if s.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFiniteActivation(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> Device {
        Device::Cpu
    }

    #[test]
    fn layer_norm_standardizes() {
        let x = Tensor::new(&[[1f64, 2.0, 3.0, 6.0]], &dev()).unwrap();
        let y = layer_norm(&x, &Tensor::ones(4, DType::F64, &dev()).unwrap(), &Tensor::zeros(4, DType::F64, &dev()).unwrap())
            .unwrap()
            .to_vec2::<f64>()
            .unwrap();
        let mean: f64 = y[0].iter().sum::<f64>() / 4.0;
        let var: f64 = y[0].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 3.5 / (3.5 + LN_EPS)).abs() < 1e-9);
    }

    #[test]
    fn interp_rows_sum_to_one_and_identity_when_equal() {
        let m = interp_matrix(7, 3, DType::F64, &dev()).unwrap().to_vec2::<f64>().unwrap();
        for row in &m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let id = interp_matrix(4, 4, DType::F64, &dev()).unwrap().to_vec2::<f64>().unwrap();
        for (i, row) in id.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn resize_keeps_ramps_and_constants() {
        // a horizontal ramp stays a ramp (interior) and constants stay constant
        let x = Tensor::arange(0f64, 4.0, &dev()).unwrap().reshape((1, 1, 1, 4)).unwrap();
        let x = x.broadcast_as((1, 1, 2, 4)).unwrap().contiguous().unwrap();
        let y = resize_bilinear(&x, 4, 8).unwrap().squeeze(0).unwrap().to_vec3::<f64>().unwrap();
        let row = &y[0][0];
        assert_eq!(row[0], 0.0);
        assert!((row[3] - 1.25).abs() < 1e-12);
        assert_eq!(row[7], 3.0);
        let c = Tensor::full(2.5f64, (2, 3, 3, 5), &dev()).unwrap();
        let r = resize_bilinear(&c, 6, 2).unwrap();
        assert_eq!(r.dims(), &[2, 3, 6, 2]);
        let v = r.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(v.iter().all(|x| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn tokens_round_trip() {
        let x = Tensor::arange(0f32, 24.0, &dev()).unwrap().reshape((1, 2, 3, 4)).unwrap();
        let t = to_tokens(&x).unwrap();
        assert_eq!(t.dims(), &[1, 12, 2]);
        let back = to_map(&t, 3, 4).unwrap();
        let diff = (back - &x).unwrap().abs().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn conv_matches_native() {
        let mut store = ParamStore::new(DType::F64, 3);
        let x = store.create("x", &[2, 3, 13, 11], Init::Normal { std: 1.0 }).unwrap();
        for (k, s, p) in [(1, 1, 0), (3, 1, 1), (3, 2, 1), (7, 4, 3), (2, 2, 0), (4, 4, 0), (3, 1, 0)] {
            let conv = Conv::new(&mut store, &format!("c{k}{s}{p}"), 3, 5, k, s, p, true, false).unwrap();
            let b = conv.bias.as_ref().unwrap();
            b.set(&Tensor::new(&[0.1f64, -0.2, 0.3, 0.0, 1.0], &dev()).unwrap()).unwrap();
            let ours = conv.forward(&x).unwrap();
            let native = x
                .conv2d(&conv.weight, p, s, 1, 1)
                .unwrap()
                .broadcast_add(&b.reshape((1, 5, 1, 1)).unwrap())
                .unwrap();
            assert_eq!(ours.dims(), native.dims(), "k{k} s{s} p{p}");
            let d = (ours - native).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_scalar::<f64>().unwrap();
            assert!(d < 1e-12, "k{k} s{s} p{p}: {d}");
        }
    }

    #[test]
    fn finite_check() {
        let ok = Tensor::new(&[1f32, 2.0], &dev()).unwrap();
        assert!(ensure_finite(&ok, "x").is_ok());
        let bad = Tensor::new(&[1f32, f32::NAN], &dev()).unwrap();
        assert!(matches!(ensure_finite(&bad, "x"), Err(ModelError::NonFiniteActivation(_))));
    }
}
