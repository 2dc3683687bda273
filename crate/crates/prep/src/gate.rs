//! Per-pair filtering: extract, match, register, warp, then accept or reject.

use hkcd_core::HousekeepingPair;
use serde::{Deserialize, Serialize};

use crate::alignment::{estimate_alignment_with, ConsensusConfig, RigidTransform};
use crate::matching::{match_features, DEFAULT_RATIO};
use crate::sift::{extract_with, SiftConfig};
use crate::warp::warp_good_image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub ratio_threshold: f32,
    /// Minimum ratio-test survivors, and minimum consensus inliers.
    pub min_matches: usize,
    /// A pair is kept only if its blank fraction is strictly below this.
    pub blank_max: f64,
    pub sift: SiftConfig,
    pub consensus: ConsensusConfig,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            ratio_threshold: DEFAULT_RATIO,
            min_matches: 8,
            blank_max: 0.20,
            sift: SiftConfig::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    GoodMatch,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RejectReason {
    None,
    TooFewMatches,
    ExcessBlank,
    AlignmentFailed,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::None => "None",
            RejectReason::TooFewMatches => "TooFewMatches",
            RejectReason::ExcessBlank => "ExcessBlank",
            RejectReason::AlignmentFailed => "AlignmentFailed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub pair_id: String,
    pub verdict: Verdict,
    pub reason: RejectReason,
    pub keypoints_poor: usize,
    pub keypoints_good: usize,
    /// Matches surviving the ratio test.
    pub match_count: usize,
    pub inlier_count: usize,
    /// Absent when the pipeline stopped before warping.
    pub blank_ratio: Option<f64>,
    pub transform: Option<RigidTransform>,
    /// Human-readable cause for `AlignmentFailed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl GateReport {
    fn rejected(mut self, reason: RejectReason) -> Self {
        self.verdict = Verdict::Rejected;
        self.reason = reason;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GateOutcome {
    pub report: GateReport,
    /// The pair with its good image replaced by the aligned one, on accept.
    pub aligned: Option<HousekeepingPair>,
}

pub fn gate_pair(pair: &HousekeepingPair) -> GateOutcome {
    gate_pair_with(pair, &GateConfig::default())
}

/// Never fails: every component error becomes a rejection. `pair` is only
/// read, so its poor image is untouched in every case.
pub fn gate_pair_with(pair: &HousekeepingPair, cfg: &GateConfig) -> GateOutcome {
    let (poor_kp, good_kp) = rayon::join(
        || extract_with(&pair.poor, &cfg.sift),
        || extract_with(&pair.good, &cfg.sift),
    );
    let mut report = GateReport {
        pair_id: pair.pair_id.clone(),
        verdict: Verdict::Rejected,
        reason: RejectReason::None,
        keypoints_poor: poor_kp.len(),
        keypoints_good: good_kp.len(),
        match_count: 0,
        inlier_count: 0,
        blank_ratio: None,
        transform: None,
        detail: None,
    };
    let reject = |report: GateReport, reason| GateOutcome {
        report: report.rejected(reason),
        aligned: None,
    };

    // good is the query set, so the estimate maps good onto poor
    let matches = match_features(&good_kp, &poor_kp, cfg.ratio_threshold);
    report.match_count = matches.len();
    if matches.len() < cfg.min_matches.max(2) {
        return reject(report, RejectReason::TooFewMatches);
    }
    let alignment = match estimate_alignment_with(&matches, &good_kp, &poor_kp, &cfg.consensus) {
        Ok(a) => a,
        Err(e) => {
            report.detail = Some(e.to_string());
            return reject(report, RejectReason::AlignmentFailed);
        }
    };
    report.inlier_count = alignment.inliers.len();
    report.transform = Some(alignment.transform);
    if alignment.inliers.len() < cfg.min_matches {
        return reject(report, RejectReason::TooFewMatches);
    }
    let (warped, blank) = match warp_good_image(&pair.good, &alignment.transform, pair.poor.dims()) {
        Ok(v) => v,
        Err(e) => {
            report.detail = Some(e.to_string());
            return reject(report, RejectReason::AlignmentFailed);
        }
    };
    report.blank_ratio = Some(blank);
    if !(blank < cfg.blank_max) {
        return reject(report, RejectReason::ExcessBlank);
    }
    report.verdict = Verdict::GoodMatch;
    let mut aligned = pair.clone();
    aligned.good = warped;
    GateOutcome {
        report,
        aligned: Some(aligned),
    }
}
