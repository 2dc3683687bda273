use hkcd_harness::{cosine_lr, HarnessError, InputCondition, TrainConfig};
use proptest::prelude::*;

fn shipped(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

#[test]
fn paper_defaults() {
    let c = TrainConfig::paper();
    assert_eq!(c.optimizer.lr, 3e-4);
    assert_eq!(c.optimizer.lr_min, 0.0);
    assert_eq!((c.optimizer.beta1, c.optimizer.beta2, c.optimizer.eps), (0.9, 0.999, 1e-8));
    assert_eq!(c.optimizer.weight_decay, 0.0);
    assert_eq!(c.batch_size, 8);
    assert_eq!(c.total_steps, 100_000);
    assert_eq!(c.scheduler_steps, 40_000);
    assert_eq!(c.loss.positive_weight, 0.3);
    assert_eq!(c.augment.resize, Some([1024, 1024]));
    assert_eq!(c.augment.crop.size, [256, 256]);
    assert!(c.augment.rotate.enabled);
    assert_eq!((c.augment.rotate.max_degrees, c.augment.rotate.prob), (180.0, 0.5));
    assert_eq!((c.augment.flip.horizontal_prob, c.augment.flip.vertical_prob), (0.5, 0.5));
    assert_eq!(c.normalization.mean, [122.8, 116.7, 104.1]);
    assert_eq!(c.normalization.std, [68.5, 66.6, 70.3]);
    assert_eq!(c.eval_resize, Some([1024, 1024]));
    assert_eq!(c.input_condition, InputCondition::All);
}

#[test]
fn desk_preset() {
    let c = TrainConfig::desk();
    assert_eq!((c.total_steps, c.batch_size), (2000, 4));
    assert!(c.model.embed_dims.iter().all(|&d| d == 64));
    c.validate().unwrap();
}

#[test]
fn shipped_files_match_presets() {
    assert_eq!(TrainConfig::from_toml(&shipped("paper.toml")).unwrap(), TrainConfig::paper());
    assert_eq!(TrainConfig::from_toml(&shipped("desk.toml")).unwrap(), TrainConfig::desk());
}

#[test]
fn snapshot_round_trips_byte_identically() {
    for c in [TrainConfig::paper(), TrainConfig::desk()] {
        let text = c.to_toml().unwrap();
        let back = TrainConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }
    // a disabled resize must not come back as the default one
    let mut c = TrainConfig::desk();
    c.augment.resize = None;
    c.eval_resize = None;
    c.input_condition = InputCondition::WithoutGood;
    let text = c.to_toml().unwrap();
    assert!(text.contains("eval_resize = []"));
    assert_eq!(TrainConfig::from_toml(&text).unwrap(), c);
}

#[test]
fn partial_files_fall_back_to_defaults() {
    let c = TrainConfig::from_toml("total_steps = 10\n[optimizer]\nlr = 0.001\n").unwrap();
    assert_eq!(c.total_steps, 10);
    assert_eq!(c.optimizer.lr, 1e-3);
    assert_eq!(c.optimizer.beta2, 0.999);
    assert_eq!(c.batch_size, 8);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(matches!(TrainConfig::from_toml("total_steps = 0"), Err(HarnessError::InvalidConfig(_))));
    assert!(matches!(TrainConfig::from_toml("batch_size = 0"), Err(HarnessError::InvalidConfig(_))));
    assert!(matches!(TrainConfig::from_toml("learning_rate = 0.1"), Err(HarnessError::ConfigParse(_))));
    assert!(matches!(TrainConfig::from_toml("[optimizer]\nmomentum = 0.9"), Err(HarnessError::ConfigParse(_))));
    assert!(TrainConfig::from_toml("[loss]\npositive_weight = 2.0").is_err());
    assert!(TrainConfig::from_toml("eval_resize = [1, 2, 3]").is_err());
}

#[test]
fn schedule_endpoints() {
    let c = TrainConfig::paper();
    assert_eq!(c.learning_rate(0), 3e-4);
    assert!(c.learning_rate(c.scheduler_steps) <= 1e-6);
    assert!(c.learning_rate(c.total_steps) <= 1e-6);
    assert!((c.learning_rate(c.scheduler_steps / 2) - 1.5e-4).abs() < 1e-12);
}

proptest! {
    #[test]
    fn schedule_is_symmetric_and_bounded(period in 1usize..50_000, frac in 0.0f64..=1.0, lr0 in 1e-6f64..1.0, floor in 0.0f64..=1.0) {
        let lr_min = lr0 * floor;
        let t = (frac * period as f64) as usize;
        let a = cosine_lr(t, period, lr0, lr_min);
        let b = cosine_lr(period - t, period, lr0, lr_min);
        prop_assert!((a + b - (lr0 + lr_min)).abs() <= 1e-12 * lr0);
        prop_assert!(a >= lr_min - 1e-15 && a <= lr0 + 1e-15);
        prop_assert!(cosine_lr(t + 1, period, lr0, lr_min) <= a + 1e-15);
        prop_assert_eq!(cosine_lr(period + t, period, lr0, lr_min), cosine_lr(period, period, lr0, lr_min));
    }
}
