//! Training and evaluation loops for the housekeeping change detector, and
//! the experiment drivers built on them.

pub mod condition;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod train;

pub use crate::condition::InputCondition;
pub use crate::config::{cosine_lr, OptimizerConfig, TrainConfig};
pub use crate::error::{HarnessError, Result};
pub use crate::eval::{
    evaluate, evaluate_pairs, evaluate_split, load_model, load_pairs, predict_images, ConstantPredictor, EvalOptions,
    ModelPredictor, OraclePredictor, Predictor,
};
pub use crate::experiments::{
    run_ablation, run_condition, run_segmentation_mode, AblationReport, ComparisonTable, ConditionResult,
    SegmentationReport,
};
pub use crate::train::{sample_seed, train, train_model, EvalPoint, LossPoint, RunRecord};
