//! Batch driver: gates every record of a manifest and writes the survivors.
//!
//! Output layout under `out`:
//!
//! ```text
//! manifest.json            accepted pairs only
//! summary.csv              pair_id, verdict, reason, match_count, blank_ratio
//! prep_summary.json        per-stage rejection counts
//! <pair_id>/gate_report.json
//! <pair_id>/{poor,good,mask}.png, meta.json   accepted pairs only
//! ```

use std::fs;
use std::path::Path;

use hkcd_core::dataset::{write_pair, DatasetManifest, PairDescriptor, MANIFEST_FILE};
use hkcd_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gate::{gate_pair_with, GateConfig, GateReport, RejectReason, Verdict};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub total: usize,
    pub accepted: usize,
    pub rejected_too_few_matches: usize,
    pub rejected_alignment_failed: usize,
    pub rejected_excess_blank: usize,
}

impl PrepSummary {
    pub fn from_reports(reports: &[GateReport]) -> Self {
        let mut s = PrepSummary {
            total: reports.len(),
            ..Default::default()
        };
        for r in reports {
            match (r.verdict, r.reason) {
                (Verdict::GoodMatch, _) => s.accepted += 1,
                (_, RejectReason::TooFewMatches) => s.rejected_too_few_matches += 1,
                (_, RejectReason::AlignmentFailed) => s.rejected_alignment_failed += 1,
                (_, RejectReason::ExcessBlank) => s.rejected_excess_blank += 1,
                (_, RejectReason::None) => {}
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PrepRun {
    pub summary: PrepSummary,
    pub reports: Vec<GateReport>,
    pub manifest: DatasetManifest,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn process(manifest: &DatasetManifest, desc: &PairDescriptor, out: &Path, cfg: &GateConfig) -> Result<(GateReport, bool)> {
    let pair = manifest.load_pair(desc)?;
    let outcome = gate_pair_with(&pair, cfg);
    let dir = out.join(&desc.pair_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let accepted = match &outcome.aligned {
        Some(aligned) => {
            write_pair(out, aligned)?;
            true
        }
        None => false,
    };
    let json = serde_json::to_string_pretty(&outcome.report).map_err(Error::from)? + "\n";
    write_text(&dir.join("gate_report.json"), &json)?;
    Ok((outcome.report, accepted))
}

/// Gates every record and writes the results under `out`. Output bytes are a
/// function of the input files and `cfg` only.
pub fn prep_dataset(manifest: &DatasetManifest, out: &Path, cfg: &GateConfig) -> Result<PrepRun> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest.into());
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results = manifest
        .records
        .par_iter()
        .map(|d| process(manifest, d, out, cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut writer = csv::Writer::from_path(out.join("summary.csv"))?;
    writer.write_record(["pair_id", "verdict", "reason", "match_count", "blank_ratio"])?;
    let mut kept = Vec::new();
    for (r, accepted) in &results {
        let verdict = match r.verdict {
            Verdict::GoodMatch => "GoodMatch",
            Verdict::Rejected => "Rejected",
        };
        let blank = r.blank_ratio.map(|b| format!("{b:.6}")).unwrap_or_default();
        writer.write_record([
            r.pair_id.as_str(),
            verdict,
            r.reason.as_str(),
            &r.match_count.to_string(),
            &blank,
        ])?;
        if *accepted {
            kept.push(PairDescriptor::standard(&r.pair_id));
        }
    }
    writer.flush().map_err(|e| Error::io(out.join("summary.csv"), e))?;

    let reports: Vec<GateReport> = results.into_iter().map(|(r, _)| r).collect();
    let summary = PrepSummary::from_reports(&reports);
    let json = serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n";
    write_text(&out.join("prep_summary.json"), &json)?;
    let out_manifest = DatasetManifest::new(out, kept)?;
    out_manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(PrepRun {
        summary,
        reports,
        manifest: out_manifest,
    })
}
