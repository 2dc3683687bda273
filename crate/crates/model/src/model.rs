use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::encoder::{Stage, VisionTower, VISION_PREFIX};
use crate::error::{ModelError, Result};
use crate::ffm::{Ffm, FusionIntermediates};
use crate::head::ChangeHead;
use crate::ops::{ensure_finite, resize_bilinear, Conv};
use crate::params::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "1";
const META_KEY: &str = "hkcd";

/// Features of one image at one stage.
#[derive(Debug, Clone)]
pub struct StageFeature {
    pub stage_index: usize,
    /// Image-encoder features projected to the stage grid.
    pub h_c: Tensor,
    /// Trainable-transformer features.
    pub h_f: Tensor,
    pub fusion: FusionIntermediates,
}

/// One side of the Siamese network. Both images go through the same
/// instance.
#[derive(Debug, Clone)]
pub struct Branch {
    tower: VisionTower,
    bridges: Vec<Conv>,
    stages: Vec<Stage>,
    ffms: Vec<Ffm>,
}

impl Branch {
    fn new(store: &mut ParamStore, cfg: &ModelConfig) -> Result<Self> {
        let tower = VisionTower::new(store, &cfg.pretrained, cfg.pretrained_branch_frozen)?;
        let mut bridges = Vec::new();
        let mut stages = Vec::new();
        let mut ffms = Vec::new();
        for s in 0..cfg.stage_count {
            let c = cfg.embed_dims[s];
            bridges.push(Conv::pointwise(store, &format!("bridge.{s}"), cfg.pretrained.width, c)?);
            stages.push(Stage::new(store, cfg, s)?);
            ffms.push(Ffm::new(store, &format!("ffm.{s}"), c, cfg.num_heads[s], cfg.sr_ratios[s], cfg.hv_mode, cfg.zero_init_residual)?);
        }
        Ok(Self {
            tower,
            bridges,
            stages,
            ffms,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Vec<StageFeature>> {
        let taps = self.tower.forward(x)?;
        let mut prev = x.clone();
        let mut out = Vec::with_capacity(self.stages.len());
        for (s, ((stage, bridge), ffm)) in self.stages.iter().zip(&self.bridges).zip(&self.ffms).enumerate() {
            let h_f = stage.forward(&prev)?;
            let (_, _, h, w) = h_f.dims4()?;
            let h_c = bridge.forward(&resize_bilinear(&taps[s], h, w)?)?;
            let fusion = ffm.forward(&h_c, &h_f)?;
            prev = fusion.h_t.clone();
            out.push(StageFeature {
                stage_index: s,
                h_c,
                h_f,
                fusion,
            });
        }
        Ok(out)
    }
}

/// Everything computed by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub poor: Vec<StageFeature>,
    pub good: Vec<StageFeature>,
    pub logits: Tensor,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    format_version: String,
    model_config: ModelConfig,
    #[serde(default)]
    extras: BTreeMap<String, String>,
}

/// Siamese change-detection network.
#[derive(Debug, Clone)]
pub struct Hcdn {
    config: ModelConfig,
    store: ParamStore,
    branch: Branch,
    head: ChangeHead,
}

impl Hcdn {
    /// Builds a model with seeded random weights, then reads the image
    /// encoder from `pretrained_weights` when that is set.
    pub fn new(config: ModelConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(dtype, config.init_seed);
        let branch = Branch::new(&mut store, &config)?;
        let head = ChangeHead::new(&mut store, &config)?;
        if config.pretrained_branch_frozen {
            store.freeze_prefix(VISION_PREFIX);
        }
        let model = Self {
            config,
            store,
            branch,
            head,
        };
        if let Some(path) = model.config.pretrained_weights.clone() {
            model.load_pretrained(Path::new(&path))?;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// The branch applied to the poor image.
    pub fn poor_branch(&self) -> &Branch {
        &self.branch
    }

    /// The branch applied to the good image; the same object as
    /// [`Hcdn::poor_branch`].
    pub fn good_branch(&self) -> &Branch {
        &self.branch
    }

    /// Logits `(B, 1, H, W)` for normalized NCHW inputs.
    pub fn forward(&self, poor: &Tensor, good: &Tensor) -> Result<Tensor> {
        Ok(self.forward_trace(poor, good)?.logits)
    }

    pub fn forward_trace(&self, poor: &Tensor, good: &Tensor) -> Result<ForwardTrace> {
        if poor.dims() != good.dims() {
            return Err(ModelError::ShapeMismatch(format!("poor {:?} vs good {:?}", poor.dims(), good.dims())));
        }
        let (_, c, h, w) = poor.dims4()?;
        let stride = self.config.stage_stride(self.config.stage_count - 1);
        if c != 3 || h % stride != 0 || w % stride != 0 || h == 0 || w == 0 {
            return Err(ModelError::ShapeMismatch(format!(
                "input {:?} must be 3-channel with sides divisible by {stride}",
                poor.dims()
            )));
        }
        let poor = poor.to_dtype(self.dtype())?;
        let good = good.to_dtype(self.dtype())?;
        let p = self.poor_branch().forward(&poor)?;
        let g = self.good_branch().forward(&good)?;
        for (side, feats) in [("poor", &p), ("good", &g)] {
            for f in feats.iter() {
                ensure_finite(&f.fusion.h_t, &format!("stage {} {side} features", f.stage_index))?;
            }
        }
        let pt: Vec<Tensor> = p.iter().map(|f| f.fusion.h_t.clone()).collect();
        let gt: Vec<Tensor> = g.iter().map(|f| f.fusion.h_t.clone()).collect();
        let logits = self.head.forward(&pt, &gt, (h, w))?;
        ensure_finite(&logits, "logits")?;
        Ok(ForwardTrace { poor: p, good: g, logits })
    }

    /// Reads `vision_model.*` tensors; all image-encoder parameters must be
    /// present. Other tensors in the file are ignored.
    pub fn load_pretrained(&self, path: &Path) -> Result<usize> {
        let tensors = read_safetensors(path)?;
        self.store.assign(&tensors, VISION_PREFIX, true).map_err(|e| ModelError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn save_checkpoint(&self, path: &Path, extras: BTreeMap<String, String>) -> Result<()> {
        let meta = CheckpointMeta {
            format_version: CHECKPOINT_FORMAT.to_string(),
            model_config: self.config.clone(),
            extras,
        };
        let json = serde_json::to_string(&meta).map_err(|e| ModelError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let snapshot = self.store.snapshot();
        let data: Vec<(&str, &Tensor)> = snapshot.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let info = HashMap::from([(META_KEY.to_string(), json)]);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| ModelError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        safetensors::serialize_to_file(data, Some(info), path).map_err(|e| ModelError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Restores a checkpoint. With `expected`, a checkpoint built for a
    /// different architecture fails with [`ModelError::ConfigMismatch`].
    pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>, dtype: DType) -> Result<(Self, BTreeMap<String, String>)> {
        let (meta, tensors) = read_checkpoint(path)?;
        if let Some(exp) = expected {
            if !exp.same_architecture(&meta.model_config) {
                return Err(ModelError::ConfigMismatch);
            }
        }
        let mut config = meta.model_config;
        config.pretrained_weights = None;
        let model = Self::new(config, dtype)?;
        model.store.assign(&tensors, "", true).map_err(|e| ModelError::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Ok((model, meta.extras))
    }

    /// Overwrites every parameter with the values in `other`, which must
    /// have the same architecture.
    pub fn copy_weights_from(&self, other: &Hcdn) -> Result<()> {
        if !self.config.same_architecture(&other.config) {
            return Err(ModelError::ConfigMismatch);
        }
        let tensors: HashMap<String, Tensor> = other.store.snapshot().into_iter().collect();
        self.store.assign(&tensors, "", true)?;
        Ok(())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_safetensors(path: &Path) -> Result<HashMap<String, Tensor>> {
    let buf = read_bytes(path)?;
    candle_core::safetensors::load_buffer(&buf, &candle_core::Device::Cpu).map_err(|e| ModelError::Checkpoint {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, HashMap<String, Tensor>)> {
    let buf = read_bytes(path)?;
    let bad = |reason: String| ModelError::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let (_, header) = safetensors::SafeTensors::read_metadata(&buf).map_err(|e| bad(e.to_string()))?;
    let json = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get(META_KEY))
        .ok_or_else(|| bad("no model metadata".into()))?;
    let meta: CheckpointMeta = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
    if meta.format_version != CHECKPOINT_FORMAT {
        return Err(bad(format!("unsupported format version {}", meta.format_version)));
    }
    let tensors = candle_core::safetensors::load_buffer(&buf, &candle_core::Device::Cpu).map_err(|e| bad(e.to_string()))?;
    Ok((meta, tensors))
}
