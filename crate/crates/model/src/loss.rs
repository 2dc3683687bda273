use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight `w` of the change (positive) class; negatives get `1 − w`.
    pub positive_weight: f64,
    /// Probabilities are clamped to `[ε, 1 − ε]` before the logarithm.
    pub probability_clamp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            positive_weight: 0.3,
            probability_clamp: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.positive_weight) {
            return Err(ModelError::InvalidLoss(format!("positive_weight {} outside [0, 1]", self.positive_weight)));
        }
        if !(self.probability_clamp > 0.0 && self.probability_clamp < 0.5) {
            return Err(ModelError::InvalidLoss(format!("probability_clamp {} outside (0, 0.5)", self.probability_clamp)));
        }
        Ok(())
    }
}

/// Mean over all pixels of
/// `−[w·y·ln ŷ + (1 − w)·(1 − y)·ln(1 − ŷ)]` with `ŷ = σ(logit)` clamped
/// to `[ε, 1 − ε]`.
pub fn weighted_cross_entropy(logits: &Tensor, targets: &Tensor, cfg: &LossConfig) -> Result<Tensor> {
    cfg.validate()?;
    if logits.dims() != targets.dims() {
        return Err(ModelError::ShapeMismatch(format!("logits {:?} vs targets {:?}", logits.dims(), targets.dims())));
    }
    let y = targets.to_dtype(logits.dtype())?;
    // y·(1 − y) vanishes exactly on {0, 1}
    let off = (&y * (1.0 - &y)?)?.abs()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if off != 0.0 {
        return Err(ModelError::NonBinaryTarget);
    }
    // ln ŷ = −softplus(−z) and ln(1 − ŷ) = −softplus(z), clamped in log
    // space; identical to clamping ŷ but without cancellation near 0 and 1
    let eps = cfg.probability_clamp;
    let (lo, hi) = (eps.ln(), (1.0 - eps).ln());
    let log_p = softplus(&logits.neg()?)?.neg()?.clamp(lo, hi)?;
    let log_q = softplus(logits)?.neg()?.clamp(lo, hi)?;
    let w = cfg.positive_weight;
    let pos = (&y * log_p)?.affine(w, 0.0)?;
    let neg = ((1.0 - &y)? * log_q)?.affine(1.0 - w, 0.0)?;
    Ok((pos + neg)?.neg()?.mean_all()?)
}

/// `ln(1 + eˣ)` evaluated as `max(x, 0) + ln(1 + e^−|x|)`.
fn softplus(x: &Tensor) -> Result<Tensor> {
    Ok((x.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?)?)
}
