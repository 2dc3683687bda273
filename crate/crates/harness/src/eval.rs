//! Evaluation passes and the predictor abstraction.

use std::path::Path;

use hkcd_core::augment::{prepare_eval, NormalizationConstants, NormalizedPair};
use hkcd_core::dataset::DatasetManifest;
use hkcd_core::metrics::{EvalScope, MetricsAccumulator, MetricsReport};
use hkcd_core::split::{SplitAssignment, SplitPart};
use hkcd_core::pair::PairMeta;
use hkcd_core::{BinaryMask, HazardType, HousekeepingPair, ImageBuffer, SceneTag};
use hkcd_model::{logits_to_masks, DType, Hcdn, ModelConfig, ModelError, PairBatch};

use crate::condition::InputCondition;
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};

/// Anything that turns a normalized pair into a change mask.
pub trait Predictor {
    fn predict(&self, pair: &NormalizedPair) -> Result<BinaryMask>;
}

/// Thresholds the model's probability at one half.
pub struct ModelPredictor<'a> {
    model: &'a Hcdn,
}

impl<'a> ModelPredictor<'a> {
    pub fn new(model: &'a Hcdn) -> Self {
        Self { model }
    }
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, pair: &NormalizedPair) -> Result<BinaryMask> {
        let batch = PairBatch::from_pairs(std::slice::from_ref(pair), self.model.dtype())?;
        let logits = self.model.forward(&batch.poor, &batch.good)?;
        let (h, w) = pair.dims();
        let row = logits_to_masks(&logits)?.pop().expect("one batch element");
        Ok(BinaryMask::new(h, w, row)?)
    }
}

/// Returns the ground truth.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, pair: &NormalizedPair) -> Result<BinaryMask> {
        Ok(pair.mask.clone())
    }
}

/// Predicts the same label everywhere.
pub struct ConstantPredictor(pub bool);

impl Predictor for ConstantPredictor {
    fn predict(&self, pair: &NormalizedPair) -> Result<BinaryMask> {
        let (h, w) = pair.dims();
        Ok(if self.0 { BinaryMask::ones(h, w)? } else { BinaryMask::zeros(h, w)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub resize: Option<[usize; 2]>,
    pub scope: EvalScope,
    pub normalization: NormalizationConstants,
    pub condition: InputCondition,
    pub unaligned_input: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self::from_config(&TrainConfig::default())
    }
}

impl EvalOptions {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            resize: cfg.eval_resize,
            scope: cfg.eval_scope,
            normalization: cfg.normalization,
            condition: cfg.input_condition,
            unaligned_input: cfg.unaligned_input,
        }
    }

    /// Resized, normalized and masked model input.
    pub fn prepare(&self, pair: &HousekeepingPair) -> Result<NormalizedPair> {
        let pair = prepare_eval(pair, self.resize)?;
        let normalized = NormalizedPair::from_pair(&pair, &self.normalization)?;
        Ok(self.condition.apply(&normalized, &self.normalization))
    }
}

/// Loads the listed pairs. Raw pairs are accepted when `unaligned` is set,
/// with the good image resized onto the poor grid.
pub fn load_pairs<S: AsRef<str>>(manifest: &DatasetManifest, ids: &[S], unaligned: bool) -> Result<Vec<HousekeepingPair>> {
    ids.iter()
        .map(|id| {
            let id = id.as_ref();
            let fail = |source| HarnessError::DataLoadFailure {
                pair_id: id.to_string(),
                source,
            };
            let desc = manifest
                .get(id)
                .ok_or_else(|| fail(hkcd_core::Error::MissingFile(manifest.base_dir().join(id))))?;
            let pair = manifest.load_pair(desc).map_err(fail)?;
            if unaligned {
                pair.with_good_resized().map_err(fail)
            } else {
                pair.ensure_prepared().map_err(fail)?;
                Ok(pair)
            }
        })
        .collect()
}

/// Scores `predictor` on already loaded pairs with global or per-image
/// pooling, in the given order.
pub fn evaluate_pairs(predictor: &dyn Predictor, pairs: &[HousekeepingPair], opts: &EvalOptions) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(HarnessError::EmptySplit("(no pairs)".into()));
    }
    let mut acc = MetricsAccumulator::new(opts.scope);
    for pair in pairs {
        let input = opts.prepare(pair)?;
        let pred = predictor.predict(&input)?;
        acc.add(&pred, &input.mask)?;
    }
    Ok(acc.report()?)
}

pub fn evaluate_split(
    predictor: &dyn Predictor,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    part: SplitPart,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let ids = split.part(part);
    if ids.is_empty() {
        return Err(HarnessError::EmptySplit(format!("{part:?}").to_lowercase()));
    }
    let pairs = load_pairs(manifest, ids, opts.unaligned_input)?;
    evaluate_pairs(predictor, &pairs, opts)
}

/// Loads a checkpoint under its saved config, or under `expected` when
/// given, which must then match the saved architecture.
pub fn load_model(checkpoint: &Path, expected: Option<&ModelConfig>) -> Result<Hcdn> {
    match Hcdn::load_checkpoint(checkpoint, expected, DType::F32) {
        Ok((model, _)) => Ok(model),
        Err(ModelError::ConfigMismatch) => Err(HarnessError::ConfigMismatch),
        Err(e) => Err(e.into()),
    }
}

/// Evaluates a saved checkpoint on one part of a split.
pub fn evaluate(
    checkpoint: &Path,
    expected: Option<&ModelConfig>,
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    part: SplitPart,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let model = load_model(checkpoint, expected)?;
    evaluate_split(&ModelPredictor::new(&model), manifest, split, part, opts)
}

/// Predicts a mask for one image pair at the poor image's resolution. With
/// no good image the blackout input is used.
pub fn predict_images(
    predictor: &dyn Predictor,
    poor: &ImageBuffer,
    good: Option<&ImageBuffer>,
    resize: Option<[usize; 2]>,
    consts: &NormalizationConstants,
) -> Result<BinaryMask> {
    let (h, w) = poor.dims();
    let (rh, rw) = resize.map_or((h, w), |[a, b]| (a, b));
    let poor_in = poor.resize_bilinear(rh, rw)?;
    let good_in = match good {
        Some(g) => g.resize_bilinear(rh, rw)?,
        None => ImageBuffer::filled(rh, rw, [0, 0, 0])?,
    };
    let pair = HousekeepingPair::new(
        "predict",
        poor_in,
        good_in,
        BinaryMask::zeros(rh, rw)?,
        PairMeta {
            type_tag: HazardType::Others,
            scene_tag: SceneTag::Outdoor,
        },
    )?;
    let mask = predictor.predict(&NormalizedPair::from_pair(&pair, consts)?)?;
    Ok(if (rh, rw) == (h, w) { mask } else { mask.resize_nearest(h, w)? })
}
