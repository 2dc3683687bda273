//! Pair preparation: keypoint matching, rigid registration of the good image
//! onto the poor image, blank-area gating, and dataset statistics.

pub mod alignment;
pub mod batch;
pub mod error;
pub mod gate;
pub mod matching;
pub mod sift;
pub mod stats;
pub mod warp;

pub use crate::alignment::{estimate_alignment, Alignment, ConsensusConfig, RigidTransform};
pub use crate::batch::{prep_dataset, PrepRun, PrepSummary};
pub use crate::error::{PrepError, Result};
pub use crate::gate::{gate_pair, gate_pair_with, GateConfig, GateOutcome, GateReport, RejectReason, Verdict};
pub use crate::matching::{match_features, MatchSet};
pub use crate::sift::{extract_local_features, KeypointSet, SiftConfig};
pub use crate::stats::{change_area_ratio, dataset_stats, StatsReport};
pub use crate::warp::warp_good_image;
