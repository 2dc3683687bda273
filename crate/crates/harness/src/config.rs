use std::f64::consts::PI;
use std::path::Path;

use hkcd_core::augment::{optional_dims, AugmentPolicy, NormalizationConstants};
use hkcd_core::metrics::EvalScope;
use hkcd_model::{LossConfig, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::condition::InputCondition;
use crate::error::{io, HarnessError, Result};

/// Adam with decoupled weight decay; `weight_decay = 0` is plain Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            lr_min: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_steps: usize,
    /// Period `T` of the cosine schedule. Past it the rate stays at `lr_min`.
    pub scheduler_steps: usize,
    pub batch_size: usize,
    /// 0 disables periodic checkpoints; the final one is always written.
    pub checkpoint_every: usize,
    /// 0 disables periodic validation.
    pub eval_every: usize,
    pub log_every: usize,
    /// Validation images are resized to this and not cropped.
    #[serde(with = "optional_dims")]
    pub eval_resize: Option<[usize; 2]>,
    pub eval_scope: EvalScope,
    /// Which images the model sees, in training and evaluation alike.
    pub input_condition: InputCondition,
    /// Accept raw pairs, resizing the good image onto the poor grid without
    /// registration.
    pub unaligned_input: bool,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub normalization: NormalizationConstants,
    pub augment: AugmentPolicy,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_steps: 100_000,
            scheduler_steps: 40_000,
            batch_size: 8,
            checkpoint_every: 5000,
            eval_every: 5000,
            log_every: 50,
            eval_resize: Some([1024, 1024]),
            eval_scope: EvalScope::Global,
            input_condition: InputCondition::All,
            unaligned_input: false,
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            normalization: NormalizationConstants::default(),
            augment: AugmentPolicy::default(),
            model: ModelConfig::paper(),
        }
    }
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Width-64 model, 2000 steps, batch 4, inputs at 512 cropped to 256.
    pub fn desk() -> Self {
        Self {
            total_steps: 2000,
            scheduler_steps: 2000,
            batch_size: 4,
            checkpoint_every: 500,
            eval_every: 500,
            log_every: 20,
            eval_resize: Some([512, 512]),
            augment: AugmentPolicy {
                resize: Some([512, 512]),
                ..AugmentPolicy::default()
            },
            model: ModelConfig::desk(),
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(io(path))?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        if self.scheduler_steps == 0 {
            return bad("scheduler_steps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr_min >= 0.0 && o.lr_min <= o.lr) {
            return bad("need 0 <= optimizer.lr_min <= optimizer.lr and lr > 0");
        }
        if !((0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0 && o.weight_decay >= 0.0) {
            return bad("optimizer betas must lie in [0, 1), eps > 0, weight_decay >= 0");
        }
        self.loss.validate()?;
        self.normalization.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        Ok(())
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        cosine_lr(step, self.scheduler_steps, self.optimizer.lr, self.optimizer.lr_min)
    }
}

/// `lr_min + (lr0 − lr_min)·(1 + cos(π·min(t, T)/T))/2`.
pub fn cosine_lr(step: usize, period: usize, lr0: f64, lr_min: f64) -> f64 {
    let t = step.min(period) as f64 / period as f64;
    lr_min + (lr0 - lr_min) * (1.0 + (PI * t).cos()) / 2.0
}
