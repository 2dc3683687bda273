#![allow(dead_code)]

use std::path::Path;

use hkcd_core::augment::AugmentPolicy;
use hkcd_core::dataset::{write_dataset, DatasetManifest};
use hkcd_core::split::SplitAssignment;
use hkcd_core::synthetic::rectangles_pair;
use hkcd_harness::TrainConfig;
use hkcd_model::ModelConfig;

/// Four 64-pixel rectangle pairs, all in the train part.
pub fn fixture(root: &Path) -> (DatasetManifest, SplitAssignment) {
    let pairs: Vec<_> = (0..4).map(|i| rectangles_pair(&format!("rect_{i}"), 64, i)).collect();
    let manifest = write_dataset(root, &pairs).unwrap();
    let split = SplitAssignment {
        seed: 0,
        ratios: [1.0, 0.0, 0.0],
        train: manifest.pair_ids().map(str::to_string).collect(),
        val: Vec::new(),
        test: Vec::new(),
    };
    (manifest, split)
}

pub fn desk_fixture_config(steps: usize) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        scheduler_steps: steps,
        checkpoint_every: 0,
        eval_every: 0,
        log_every: 0,
        eval_resize: None,
        augment: AugmentPolicy::identity(),
        ..TrainConfig::desk()
    }
}

pub fn toy_fixture_config(steps: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        model: ModelConfig::toy(),
        ..desk_fixture_config(steps)
    }
}
