//! Paired-condition experiment drivers: the blackout ablation and the
//! segmentation-mode comparison.

use std::fmt::Write as _;
use std::path::Path;

use hkcd_core::dataset::DatasetManifest;
use hkcd_core::metrics::MetricsReport;
use hkcd_core::split::{SplitAssignment, SplitPart};
use serde::{Deserialize, Serialize};

use crate::condition::InputCondition;
use crate::config::TrainConfig;
use crate::error::{io, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::train::{train, RunRecord};

pub const HEADLINE_COLUMNS: [&str; 5] = ["aACC", "mFscore", "mPrecision", "mRecall", "mIoU"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: InputCondition,
    pub label: String,
    pub report: MetricsReport,
    pub checkpoint: std::path::PathBuf,
}

/// Rows of `[aACC, mFscore, mPrecision, mRecall, mIoU]` in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<(String, [f64; 5])>,
}

fn percent(report: &MetricsReport) -> [f64; 5] {
    report.as_percentages().headline()
}

impl ComparisonTable {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| Input | {} |\n|---|", HEADLINE_COLUMNS.join(" | "));
        out.push_str(&"---|".repeat(5));
        out.push('\n');
        for (label, v) in &self.rows {
            let cells: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
            writeln!(out, "| {label} | {} |", cells.join(" | ")).expect("string write");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub with_all: ConditionResult,
    pub without_good: ConditionResult,
    /// `with_all − without_good`, in percentage points.
    pub difference: [f64; 5],
}

impl AblationReport {
    pub fn table(&self) -> ComparisonTable {
        ComparisonTable {
            rows: vec![
                (self.with_all.label.clone(), percent(&self.with_all.report)),
                (self.without_good.label.clone(), percent(&self.without_good.report)),
                ("Difference".to_string(), self.difference),
            ],
        }
    }

    pub fn delta_miou(&self) -> f64 {
        self.difference[4]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub results: Vec<ConditionResult>,
}

impl SegmentationReport {
    pub fn table(&self) -> ComparisonTable {
        ComparisonTable {
            rows: self.results.iter().map(|r| (r.label.clone(), percent(&r.report))).collect(),
        }
    }

    pub fn get(&self, condition: InputCondition) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.condition == condition)
    }
}

/// Trains under one input condition in `out/<slug>` and scores the
/// selected checkpoint on `eval_part` under the same condition.
pub fn run_condition(
    config: &TrainConfig,
    condition: InputCondition,
    split: &SplitAssignment,
    manifest: &DatasetManifest,
    eval_part: SplitPart,
    out_dir: &Path,
) -> Result<(ConditionResult, RunRecord)> {
    let cfg = TrainConfig {
        input_condition: condition,
        ..config.clone()
    };
    let record = train(&cfg, split, manifest, &out_dir.join(condition.slug()))?;
    let checkpoint = record.selected_checkpoint().to_path_buf();
    let report = evaluate(&checkpoint, Some(&cfg.model), manifest, split, eval_part, &EvalOptions::from_config(&cfg))?;
    let result = ConditionResult {
        condition,
        label: condition.label().to_string(),
        report,
        checkpoint,
    };
    Ok((result, record))
}

fn write_outputs<T: Serialize>(out_dir: &Path, value: &T, table: &ComparisonTable) -> Result<()> {
    let json = out_dir.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(value)? + "\n").map_err(io(&json))?;
    let md = out_dir.join("table.md");
    std::fs::write(&md, table.to_markdown()).map_err(io(&md))
}

/// Trains twice with identical seeds, once on full inputs and once with every
/// good image blacked out, and tabulates the difference.
pub fn run_ablation(
    config: &TrainConfig,
    split: &SplitAssignment,
    manifest: &DatasetManifest,
    eval_part: SplitPart,
    out_dir: &Path,
) -> Result<AblationReport> {
    let (with_all, _) = run_condition(config, InputCondition::All, split, manifest, eval_part, out_dir)?;
    let (without_good, _) = run_condition(config, InputCondition::WithoutGood, split, manifest, eval_part, out_dir)?;
    let (a, b) = (percent(&with_all.report), percent(&without_good.report));
    let difference = std::array::from_fn(|i| ((a[i] - b[i]) * 100.0).round() / 100.0);
    let report = AblationReport {
        with_all,
        without_good,
        difference,
    };
    write_outputs(out_dir, &report, &report.table())?;
    Ok(report)
}

pub const SEGMENTATION_CONDITIONS: [InputCondition; 3] =
    [InputCondition::WithoutPoor, InputCondition::WithoutGood, InputCondition::All];

/// Trains on raw, unregistered pairs under each input condition. Without
/// its good image the network is a single-image segmenter of the poor image.
pub fn run_segmentation_mode(
    config: &TrainConfig,
    raw_manifest: &DatasetManifest,
    split: &SplitAssignment,
    eval_part: SplitPart,
    out_dir: &Path,
) -> Result<SegmentationReport> {
    let cfg = TrainConfig {
        unaligned_input: true,
        ..config.clone()
    };
    let mut results = Vec::new();
    for condition in SEGMENTATION_CONDITIONS {
        results.push(run_condition(&cfg, condition, split, raw_manifest, eval_part, out_dir)?.0);
    }
    let report = SegmentationReport { results };
    write_outputs(out_dir, &report, &report.table())?;
    Ok(report)
}
