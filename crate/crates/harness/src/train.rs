//! The training loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use hkcd_core::augment::{augment_pair, NormalizedPair};
use hkcd_core::dataset::DatasetManifest;
use hkcd_core::metrics::MetricsReport;
use hkcd_core::split::SplitAssignment;
use hkcd_core::HousekeepingPair;
use hkcd_model::{weighted_cross_entropy, DType, Hcdn, ModelError, PairBatch};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{io, HarnessError, Result};
use crate::eval::{evaluate_pairs, load_pairs, EvalOptions, ModelPredictor};

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const LOSS_CSV: &str = "loss.csv";
pub const RUN_RECORD: &str = "run_record.json";
pub const NONFINITE_DUMP: &str = "nonfinite_batch.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_dir: PathBuf,
    pub config_snapshot: String,
    pub loss_curve: Vec<LossPoint>,
    pub evaluations: Vec<EvalPoint>,
    /// Highest validation mIoU so far; absent without a validation set.
    pub best_checkpoint: Option<PathBuf>,
    pub best_step: Option<usize>,
    pub final_checkpoint: PathBuf,
    pub steps: usize,
    pub wall_clock_secs: f64,
    pub secs_per_step: f64,
}

impl RunRecord {
    /// The checkpoint to report: best on validation, else the final one.
    pub fn selected_checkpoint(&self) -> &Path {
        self.best_checkpoint.as_deref().unwrap_or(&self.final_checkpoint)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the augmentation draw for batch slot `slot` at `step`.
pub fn sample_seed(seed: u64, step: usize, slot: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ step as u64) ^ slot as u64)
}

/// Endless stream of indices, reshuffled every epoch.
struct Sampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Sampler {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng: ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5A4D_504C)),
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io(path))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io(path))
}

fn make_batch(cfg: &TrainConfig, pairs: &[HousekeepingPair], picks: &[usize], step: usize) -> Result<PairBatch> {
    let mut inputs = Vec::with_capacity(picks.len());
    for (slot, &i) in picks.iter().enumerate() {
        let aug = augment_pair(&pairs[i], &cfg.augment, sample_seed(cfg.seed, step, slot))?;
        let normalized = NormalizedPair::from_pair(&aug, &cfg.normalization)?;
        inputs.push(cfg.input_condition.apply(&normalized, &cfg.normalization));
    }
    Ok(PairBatch::from_pairs(&inputs, DType::F32)?)
}

/// Dumps the offending batch ids next to the run and builds the error.
fn non_finite(out_dir: &Path, step: usize, ids: &[String]) -> HarnessError {
    let dump = serde_json::json!({ "step": step, "batch_ids": ids });
    if let Err(e) = write(&out_dir.join(NONFINITE_DUMP), &format!("{dump:#}\n")) {
        return e;
    }
    HarnessError::NonFiniteLoss {
        step,
        batch_ids: ids.to_vec(),
    }
}

fn save(model: &Hcdn, path: &Path, out_dir: &Path, step: usize, seed: u64, ids: &[String]) -> Result<()> {
    // never persist parameters a bad step has poisoned
    if !model.params().all_finite()? {
        return Err(non_finite(out_dir, step, ids));
    }
    let extras = BTreeMap::from([("step".to_string(), step.to_string()), ("seed".to_string(), seed.to_string())]);
    Ok(model.save_checkpoint(path, extras)?)
}

/// Trains on the train part of `split`, validating on its val part, and
/// writes everything under `out_dir`.
pub fn train(config: &TrainConfig, split: &SplitAssignment, manifest: &DatasetManifest, out_dir: &Path) -> Result<RunRecord> {
    train_model(config, split, manifest, out_dir).map(|(_, r)| r)
}

/// Like [`train`], also returning the model as it stands after the last step.
pub fn train_model(
    config: &TrainConfig,
    split: &SplitAssignment,
    manifest: &DatasetManifest,
    out_dir: &Path,
) -> Result<(Hcdn, RunRecord)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(HarnessError::EmptySplit("train".into()));
    }
    let started = Instant::now();
    let (metrics_dir, ckpt_dir) = (out_dir.join("metrics"), out_dir.join("checkpoints"));
    create_dir(&metrics_dir)?;
    create_dir(&ckpt_dir)?;
    let snapshot = config.to_toml()?;
    write(&out_dir.join(CONFIG_SNAPSHOT), &snapshot)?;
    split.save(&out_dir.join("split.json"))?;

    let train_pairs = load_pairs(manifest, &split.train, config.unaligned_input)?;
    let val_pairs = load_pairs(manifest, &split.val, config.unaligned_input)?;
    let eval_opts = EvalOptions::from_config(config);

    let model = Hcdn::new(config.model.clone(), DType::F32)?;
    let o = &config.optimizer;
    let mut opt = AdamW::new(
        model.params().trainable_vars(),
        ParamsAdamW {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
        },
    )?;

    let mut sampler = Sampler::new(train_pairs.len(), config.seed);
    let mut record = RunRecord {
        run_dir: out_dir.to_path_buf(),
        config_snapshot: snapshot,
        loss_curve: Vec::with_capacity(config.total_steps),
        evaluations: Vec::new(),
        best_checkpoint: None,
        best_step: None,
        final_checkpoint: ckpt_dir.join("last.ckpt"),
        steps: config.total_steps,
        wall_clock_secs: 0.0,
        secs_per_step: 0.0,
    };
    let mut best_miou = f64::NEG_INFINITY;
    let mut ids: Vec<String> = Vec::new();
    let loop_start = Instant::now();

    for step in 0..config.total_steps {
        let lr = config.learning_rate(step);
        opt.set_learning_rate(lr);
        let picks: Vec<usize> = (0..config.batch_size).map(|_| sampler.next()).collect();
        let batch = make_batch(config, &train_pairs, &picks, step)?;
        ids = batch.ids.clone();
        let logits = match model.forward(&batch.poor, &batch.good) {
            Err(ModelError::NonFiniteActivation(_)) => return Err(non_finite(out_dir, step, &ids)),
            other => other?,
        };
        let loss = weighted_cross_entropy(&logits, &batch.mask, &config.loss)?;
        let value = loss.to_dtype(DType::F64)?.to_scalar::<f64>()?;
        if !value.is_finite() {
            return Err(non_finite(out_dir, step, &ids));
        }
        opt.backward_step(&loss)?;
        record.loss_curve.push(LossPoint { step, lr, loss: value });

        let done = step + 1;
        if config.log_every > 0 && done % config.log_every == 0 {
            log::info!("step {done}/{} loss {value:.5} lr {lr:.3e}", config.total_steps);
        }
        let last = done == config.total_steps;
        let eval_due = config.eval_every > 0 && done % config.eval_every == 0;
        if !val_pairs.is_empty() && (eval_due || last) {
            let report = evaluate_pairs(&ModelPredictor::new(&model), &val_pairs, &eval_opts)?;
            write(&metrics_dir.join(format!("val_step_{done:06}.json")), &report.to_json()?)?;
            log::info!("step {done} val mIoU {:.4}", report.m_iou);
            if report.m_iou > best_miou {
                best_miou = report.m_iou;
                let path = ckpt_dir.join("best.ckpt");
                save(&model, &path, out_dir, done, config.seed, &ids)?;
                record.best_checkpoint = Some(path);
                record.best_step = Some(done);
            }
            record.evaluations.push(EvalPoint { step: done, report });
        }
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && !last {
            save(&model, &record.final_checkpoint, out_dir, done, config.seed, &ids)?;
        }
    }
    save(&model, &record.final_checkpoint, out_dir, config.total_steps, config.seed, &ids)?;

    let mut csv = String::from("step,lr,loss\n");
    for p in &record.loss_curve {
        writeln!(csv, "{},{},{}", p.step, p.lr, p.loss).expect("string write");
    }
    write(&out_dir.join(LOSS_CSV), &csv)?;
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    record.secs_per_step = loop_start.elapsed().as_secs_f64() / config.total_steps as f64;
    write(&out_dir.join(RUN_RECORD), &(serde_json::to_string_pretty(&record)? + "\n"))?;
    Ok((model, record))
}
