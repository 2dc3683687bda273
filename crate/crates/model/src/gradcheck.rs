//! Central-difference gradient checking.

use candle_core::{DType, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub probes: usize,
    pub step: f64,
    pub seed: u64,
    /// Denominator floor. Gradients below it are compared in absolute
    /// terms, since central differences of a loss of size L carry noise of
    /// roughly ε_mach·L/step and structurally zero gradients (such as a
    /// key bias under softmax) would otherwise divide noise by noise.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            probes: 50,
            step: 1e-5,
            seed: 0,
            floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn element(t: &Tensor, index: usize) -> Result<f64> {
    Ok(t.flatten_all()?.get(index)?.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn set_element(var: &Var, index: usize, value: f64) -> Result<()> {
    let mut v = var.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
    v[index] = value;
    let t = Tensor::from_vec(v, var.shape(), var.device())?.to_dtype(var.dtype())?;
    var.set(&t)?;
    Ok(())
}

/// Compares gradients of `analytic_loss` w.r.t. `analytic_vars` against
/// central differences of `numeric_loss` w.r.t. `numeric_vars`. The two
/// lists pair up by position and must hold equal shapes; they may be the
/// same variables, or a lower-precision copy checked against a
/// higher-precision oracle. Probed elements are drawn uniformly over all
/// scalar entries without repetition.
pub fn check_gradients(
    analytic_vars: &[(String, Var)],
    analytic_loss: &dyn Fn() -> Result<Tensor>,
    numeric_vars: &[(String, Var)],
    numeric_loss: &dyn Fn() -> Result<Tensor>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if analytic_vars.len() != numeric_vars.len()
        || analytic_vars.iter().zip(numeric_vars).any(|((_, a), (_, n))| a.dims() != n.dims())
    {
        return Err(ModelError::ShapeMismatch("analytic and numeric parameter lists differ".into()));
    }
    let grads = analytic_loss()?.backward()?;
    let sizes: Vec<usize> = numeric_vars.iter().map(|(_, v)| v.elem_count()).collect();
    let total: usize = sizes.iter().sum();
    let wanted = cfg.probes.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < wanted {
        picked.insert(rng.random_range(0..total));
    }
    let mut report = GradCheckReport::default();
    for flat in picked {
        let (mut slot, mut index) = (0, flat);
        while index >= sizes[slot] {
            index -= sizes[slot];
            slot += 1;
        }
        let (name, a_var) = &analytic_vars[slot];
        let analytic = match grads.get(a_var.as_tensor()) {
            Some(g) => element(g, index)?,
            None => 0.0,
        };
        let n_var = &numeric_vars[slot].1;
        let x0 = element(n_var.as_tensor(), index)?;
        set_element(n_var, index, x0 + cfg.step)?;
        let up = scalar(&numeric_loss()?)?;
        set_element(n_var, index, x0 - cfg.step)?;
        let down = scalar(&numeric_loss()?)?;
        set_element(n_var, index, x0)?;
        let numeric = (up - down) / (2.0 * cfg.step);
        report.probes.push(Probe {
            name: name.clone(),
            index,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric, cfg.floor),
        });
    }
    Ok(report)
}
