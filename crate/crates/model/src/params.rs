//! Named parameter storage with deterministic, name-seeded initialization.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal with standard deviation `gain / sqrt(fan_in)`.
    Scaled { fan_in: usize, gain: f64 },
    Normal { std: f64 },
}

/// Parameters keyed by dotted name. Each parameter's initial values depend
/// only on the store seed and the name, never on creation order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    frozen: BTreeSet<String>,
    dtype: DType,
    device: Device,
    seed: u64,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl ParamStore {
    pub fn new(dtype: DType, seed: u64) -> Self {
        Self {
            vars: BTreeMap::new(),
            frozen: BTreeSet::new(),
            dtype,
            device: Device::Cpu,
            seed,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn create(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        if self.vars.contains_key(name) {
            return Err(ModelError::InvalidConfig(format!("parameter {name} created twice")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Scaled { fan_in, gain } => self.normal(name, n, gain / (fan_in.max(1) as f64).sqrt()),
            Init::Normal { std } => self.normal(name, n, std),
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), var.clone());
        Ok(var)
    }

    fn normal(&self, name: &str, n: usize, std: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name));
        let dist = Normal::new(0.0, std).expect("finite std");
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// Scalar parameter count.
    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn freeze_prefix(&mut self, prefix: &str) {
        for name in self.vars.keys().filter(|n| n.starts_with(prefix)) {
            self.frozen.insert(name.clone());
        }
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }

    /// Parameters an optimizer should update, in name order.
    pub fn trainable(&self) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(n, _)| !self.frozen.contains(*n))
            .map(|(n, v)| (n.clone(), v.clone()))
            .collect()
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.trainable().into_iter().map(|(_, v)| v).collect()
    }

    /// Overwrites parameters from `tensors`. Names absent from the store are
    /// ignored; with `require_all`, every store name matching `prefix` must
    /// be supplied. Returns how many parameters were set.
    pub fn assign(&self, tensors: &HashMap<String, Tensor>, prefix: &str, require_all: bool) -> Result<usize> {
        let mut set = 0;
        for (name, var) in self.vars.iter().filter(|(n, _)| n.starts_with(prefix)) {
            match tensors.get(name) {
                Some(t) => {
                    if t.dims() != var.dims() {
                        return Err(ModelError::ShapeMismatch(format!(
                            "{name}: stored {:?}, expected {:?}",
                            t.dims(),
                            var.dims()
                        )));
                    }
                    var.set(&t.to_dtype(self.dtype)?)?;
                    set += 1;
                }
                None if require_all => {
                    return Err(ModelError::ShapeMismatch(format!("missing parameter {name}")));
                }
                None => {}
            }
        }
        Ok(set)
    }

    /// Current values of every parameter.
    pub fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(n, v)| (n.clone(), v.as_tensor().copy().expect("cpu copy")))
            .collect()
    }

    pub fn all_finite(&self) -> Result<bool> {
        for v in self.vars.values() {
            let s = v.as_tensor().sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !s.is_finite() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
