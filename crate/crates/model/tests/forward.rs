use std::collections::BTreeMap;

use hkcd_core::augment::{NormalizationConstants, NormalizedPair};
use hkcd_core::synthetic::rectangles_pair;
use hkcd_model::params::{Init, ParamStore};
use hkcd_model::{blackout_good, DType, Ffm, Hcdn, HvMode, ModelConfig, ModelError, PairBatch, Tensor};

fn randn(shape: &[usize], seed: u64, dtype: DType) -> Tensor {
    let mut s = ParamStore::new(dtype, seed);
    s.create("t", shape, Init::Normal { std: 1.0 }).unwrap().as_tensor().clone()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    (a - b).unwrap().abs().unwrap().flatten_all().unwrap().max(0).unwrap().to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

#[test]
fn zeroed_fusion_reduces_to_two_h_f_plus_h_c() {
    for (seed, mode) in [(1, HvMode::Attention), (2, HvMode::Attention), (3, HvMode::Knowledge)] {
        let mut store = ParamStore::new(DType::F64, seed);
        let ffm = Ffm::new(&mut store, "f", 8, 2, 2, mode, true).unwrap();
        let h_c = randn(&[2, 8, 6, 4], seed + 10, DType::F64);
        let h_f = randn(&[2, 8, 6, 4], seed + 20, DType::F64);
        let out = ffm.forward(&h_c, &h_f).unwrap();
        let mut oracle = ((&h_f * 2.0).unwrap() + &h_c).unwrap();
        if mode == HvMode::Knowledge {
            // h_v = h_k = h_c contributes one more copy of h_c
            oracle = (oracle + &h_c).unwrap();
        }
        assert_eq!(max_abs_diff(&out.h_t, &oracle), 0.0);
        assert_eq!(max_abs_diff(&out.h_k, &h_c), 0.0);
        assert_eq!(max_abs_diff(&out.h_l, &(&h_f + &h_c).unwrap()), 0.0);
        assert_eq!(out.attention.abs().unwrap().sum_all().unwrap().to_scalar::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn full_resolution_logits() {
    let model = Hcdn::new(ModelConfig::desk(), DType::F32).unwrap();
    let x = randn(&[1, 3, 256, 256], 1, DType::F32);
    let y = randn(&[1, 3, 256, 256], 2, DType::F32);
    let trace = model.forward_trace(&x, &y).unwrap();
    assert_eq!(trace.logits.dims(), &[1, 1, 256, 256]);
    for (s, f) in trace.poor.iter().enumerate() {
        let side = 256 / (4 << s);
        assert_eq!(f.h_f.dims(), &[1, 64, side, side]);
        assert_eq!(f.h_c.dims(), f.h_f.dims());
        for t in [&f.fusion.h_k, &f.fusion.h_l, &f.fusion.h_v, &f.fusion.h_t] {
            assert_eq!(t.dims(), f.h_f.dims());
        }
    }
}

fn toy() -> Hcdn {
    let cfg = ModelConfig {
        zero_init_residual: false,
        ..ModelConfig::toy()
    };
    Hcdn::new(cfg, DType::F32).unwrap()
}

#[test]
fn branches_are_shared_and_order_matters() {
    let model = toy();
    assert!(std::ptr::eq(model.poor_branch(), model.good_branch()));
    let a = randn(&[1, 3, 32, 32], 3, DType::F32);
    let b = randn(&[1, 3, 32, 32], 4, DType::F32);
    let ab = model.forward(&a, &b).unwrap();
    let ba = model.forward(&b, &a).unwrap();
    assert!(max_abs_diff(&ab, &ba) > 1e-4);

    // one parameter update is seen by both sides
    let before = model.forward_trace(&a, &a).unwrap();
    let w = model.params().get("encoder.stages.0.patch_embed.proj.weight").unwrap();
    w.set(&(w.as_tensor() * 1.5).unwrap()).unwrap();
    let after = model.forward_trace(&a, &a).unwrap();
    let dp = max_abs_diff(&before.poor[0].h_f, &after.poor[0].h_f);
    let dg = max_abs_diff(&before.good[0].h_f, &after.good[0].h_f);
    assert!(dp > 0.0);
    assert_eq!(dp, dg);
}

#[test]
fn batch_invariance() {
    let model = toy();
    let poor = randn(&[4, 3, 32, 32], 5, DType::F32);
    let good = randn(&[4, 3, 32, 32], 6, DType::F32);
    let batched = model.forward(&poor, &good).unwrap();
    for i in 0..4 {
        let single = model.forward(&poor.narrow(0, i, 1).unwrap(), &good.narrow(0, i, 1).unwrap()).unwrap();
        assert!(max_abs_diff(&single, &batched.narrow(0, i, 1).unwrap()) < 1e-5);
    }
}

#[test]
fn shape_errors() {
    let model = toy();
    let a = randn(&[1, 3, 32, 32], 1, DType::F32);
    let b = randn(&[1, 3, 32, 16], 1, DType::F32);
    assert!(matches!(model.forward(&a, &b), Err(ModelError::ShapeMismatch(_))));
    let c = randn(&[1, 3, 20, 20], 1, DType::F32);
    assert!(matches!(model.forward(&c, &c), Err(ModelError::ShapeMismatch(_))));
}

#[test]
fn non_finite_activations_are_reported() {
    let model = toy();
    let w = model.params().get("encoder.stages.0.norm.bias").unwrap();
    w.set(&Tensor::full(f32::NAN, w.shape(), w.device()).unwrap()).unwrap();
    let a = randn(&[1, 3, 16, 16], 1, DType::F32);
    match model.forward(&a, &a) {
        Err(ModelError::NonFiniteActivation(what)) => assert!(what.contains("stage 0")),
        other => panic!("expected NonFiniteActivation, got {other:?}"),
    }
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.ckpt");
    let model = toy();
    let extras = BTreeMap::from([("step".to_string(), "12".to_string())]);
    model.save_checkpoint(&path, extras.clone()).unwrap();
    let (back, got) = Hcdn::load_checkpoint(&path, Some(model.config()), DType::F32).unwrap();
    assert_eq!(got, extras);
    let a = randn(&[1, 3, 16, 16], 7, DType::F32);
    let b = randn(&[1, 3, 16, 16], 8, DType::F32);
    assert_eq!(max_abs_diff(&model.forward(&a, &b).unwrap(), &back.forward(&a, &b).unwrap()), 0.0);

    let mut other = model.config().clone();
    other.decoder_dim = 16;
    assert!(matches!(Hcdn::load_checkpoint(&path, Some(&other), DType::F32), Err(ModelError::ConfigMismatch)));
    // same bytes twice
    let again = tmp.path().join("again.ckpt");
    back.save_checkpoint(&again, extras).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn pretrained_weights_are_loaded_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("vision.safetensors");
    let donor = Hcdn::new(
        ModelConfig {
            init_seed: 99,
            ..ModelConfig::toy()
        },
        DType::F32,
    )
    .unwrap();
    let vision: Vec<(String, Tensor)> = donor
        .params()
        .snapshot()
        .into_iter()
        .filter(|(n, _)| n.starts_with("vision_model."))
        .collect();
    safetensors::serialize_to_file(vision.iter().map(|(n, t)| (n.as_str(), t)), None, &path).unwrap();

    let cfg = ModelConfig {
        pretrained_weights: Some(path.to_string_lossy().into_owned()),
        ..ModelConfig::toy()
    };
    let model = Hcdn::new(cfg, DType::F32).unwrap();
    for (name, t) in &vision {
        assert_eq!(max_abs_diff(model.params().get(name).unwrap().as_tensor(), t), 0.0, "{name}");
    }
    assert!(model.params().trainable().iter().all(|(n, _)| !n.starts_with("vision_model.")));

    let missing = tmp.path().join("partial.safetensors");
    safetensors::serialize_to_file(vision.iter().skip(1).map(|(n, t)| (n.as_str(), t)), None, &missing).unwrap();
    let cfg = ModelConfig {
        pretrained_weights: Some(missing.to_string_lossy().into_owned()),
        ..ModelConfig::toy()
    };
    assert!(matches!(Hcdn::new(cfg, DType::F32), Err(ModelError::Checkpoint { .. })));
}

#[test]
fn blackout_good_contract() {
    let consts = NormalizationConstants::default();
    let pair = NormalizedPair::from_pair(&rectangles_pair("r", 32, 1), &consts).unwrap();
    let once = blackout_good(&pair, &consts);
    assert_eq!(once.poor, pair.poor);
    assert_eq!(once.mask, pair.mask);
    for ((_, _, c), v) in once.good.indexed_iter() {
        assert_eq!(*v, ((0.0 - consts.mean[c]) / consts.std[c]) as f32);
    }
    assert_eq!(blackout_good(&once, &consts), once);

    let batch = PairBatch::from_pairs(&[pair.clone(), once], DType::F32).unwrap();
    assert_eq!(batch.poor.dims(), &[2, 3, 32, 32]);
    assert_eq!(batch.mask.dims(), &[2, 1, 32, 32]);
    let ones = batch.mask.sum_all().unwrap().to_scalar::<f32>().unwrap();
    assert_eq!(ones as usize, 2 * pair.mask.count_ones());
}
