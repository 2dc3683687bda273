mod common;

use hkcd_core::dataset::write_dataset;
use hkcd_core::pair::PairMeta;
use hkcd_core::split::{SplitAssignment, SplitPart};
use hkcd_core::{BinaryMask, HazardType, HousekeepingPair, ImageBuffer, SceneTag};
use hkcd_harness::*;
use hkcd_model::{DType, Hcdn, ModelConfig};

fn quarter_pair(id: &str, side: usize, corner: usize) -> HousekeepingPair {
    let h = side / 2;
    let (top, left) = ((corner / 2) * h, (corner % 2) * h);
    let mask = BinaryMask::from_fn(side, side, |y, x| y >= top && y < top + h && x >= left && x < left + h).unwrap();
    HousekeepingPair::new(
        id,
        ImageBuffer::filled(side, side, [200, 30, 30]).unwrap(),
        ImageBuffer::filled(side, side, [90, 90, 90]).unwrap(),
        mask,
        PairMeta {
            type_tag: HazardType::Debris,
            scene_tag: SceneTag::Indoor,
        },
    )
    .unwrap()
}

fn quarter_split(tmp: &std::path::Path) -> (hkcd_core::dataset::DatasetManifest, SplitAssignment) {
    let pairs: Vec<_> = (0..4).map(|i| quarter_pair(&format!("q{i}"), 16, i)).collect();
    let manifest = write_dataset(tmp, &pairs).unwrap();
    let split = SplitAssignment {
        seed: 0,
        ratios: [0.0, 0.0, 1.0],
        train: Vec::new(),
        val: Vec::new(),
        test: manifest.pair_ids().map(str::to_string).collect(),
    };
    (manifest, split)
}

fn opts() -> EvalOptions {
    EvalOptions {
        resize: None,
        ..EvalOptions::default()
    }
}

#[test]
fn oracle_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, s) = quarter_split(tmp.path());
    let r = evaluate_split(&OraclePredictor, &m, &s, SplitPart::Test, &opts()).unwrap();
    assert_eq!(r.headline(), [1.0; 5]);
    assert!(r.undefined.is_empty());
}

#[test]
fn all_negative_on_quarter_change() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, s) = quarter_split(tmp.path());
    let r = evaluate_split(&ConstantPredictor(false), &m, &s, SplitPart::Test, &opts()).unwrap();
    assert_eq!(r.a_acc, 0.75);
    assert_eq!(r.change.recall, 0.0);
    assert_eq!(r.no_change.recall, 1.0);
    assert_eq!(r.no_change.iou, 0.75);
    // no positive predictions leaves change precision undefined, scored 0
    assert_eq!(r.m_iou, 0.375);

    let r = evaluate_split(&ConstantPredictor(true), &m, &s, SplitPart::Test, &opts()).unwrap();
    assert_eq!(r.a_acc, 0.25);
    assert_eq!(r.change.recall, 1.0);
    assert_eq!(r.change.precision, 0.25);
}

#[test]
fn resized_evaluation_scores_resized_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, s) = quarter_split(tmp.path());
    let o = EvalOptions {
        resize: Some([32, 32]),
        ..EvalOptions::default()
    };
    let r = evaluate_split(&ConstantPredictor(false), &m, &s, SplitPart::Test, &o).unwrap();
    assert_eq!(r.a_acc, 0.75);
}

#[test]
fn empty_parts_and_missing_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, mut s) = quarter_split(tmp.path());
    assert!(matches!(
        evaluate_split(&OraclePredictor, &m, &s, SplitPart::Val, &opts()),
        Err(HarnessError::EmptySplit(p)) if p == "val"
    ));
    s.test.push("ghost".into());
    match evaluate_split(&OraclePredictor, &m, &s, SplitPart::Test, &opts()) {
        Err(HarnessError::DataLoadFailure { pair_id, .. }) => assert_eq!(pair_id, "ghost"),
        other => panic!("expected DataLoadFailure, got {other:?}"),
    }
}

#[test]
fn unaligned_pairs_need_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = quarter_pair("raw", 16, 0);
    p.good = ImageBuffer::filled(12, 20, [1, 2, 3]).unwrap();
    let m = write_dataset(tmp.path(), &[p]).unwrap();
    assert!(matches!(load_pairs(&m, &["raw"], false), Err(HarnessError::DataLoadFailure { .. })));
    let loaded = load_pairs(&m, &["raw"], true).unwrap();
    assert_eq!(loaded[0].good.dims(), (16, 16));
}

#[test]
fn checkpoint_evaluation_is_byte_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let (m, s) = quarter_split(&tmp.path().join("data"));
    let cfg = ModelConfig {
        zero_init_residual: false,
        ..ModelConfig::toy()
    };
    let model = Hcdn::new(cfg.clone(), DType::F32).unwrap();
    let ckpt = tmp.path().join("m.ckpt");
    model.save_checkpoint(&ckpt, Default::default()).unwrap();
    let a = evaluate(&ckpt, None, &m, &s, SplitPart::Test, &opts()).unwrap().to_json().unwrap();
    let b = evaluate(&ckpt, Some(&cfg), &m, &s, SplitPart::Test, &opts()).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    assert!(a.contains("\"mIoU\""));

    let other = ModelConfig {
        decoder_dim: 4,
        ..cfg
    };
    assert!(matches!(
        evaluate(&ckpt, Some(&other), &m, &s, SplitPart::Test, &opts()),
        Err(HarnessError::ConfigMismatch)
    ));
}

#[test]
fn predict_images_restores_resolution() {
    let poor = ImageBuffer::filled(20, 12, [10, 20, 30]).unwrap();
    let mask = predict_images(&ConstantPredictor(true), &poor, None, Some([16, 16]), &Default::default()).unwrap();
    assert_eq!(mask.dims(), (20, 12));
    assert_eq!(mask.count_ones(), 240);
}
