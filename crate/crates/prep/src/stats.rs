//! Dataset composition and change-area statistics.

use std::collections::BTreeMap;

use hkcd_core::dataset::DatasetManifest;
use hkcd_core::pair::PairMeta;
use hkcd_core::{BinaryMask, Error, HazardType, SceneTag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const HISTOGRAM_BINS: usize = 10;

/// Fraction of mask pixels set to 1.
pub fn change_area_ratio(mask: &BinaryMask) -> f64 {
    mask.count_ones() as f64 / mask.len() as f64
}

/// Decile bin of `ones / total`: `[0, 10%)`, …, `[90%, 100%]`. Integer
/// arithmetic keeps exact boundaries like 30% in the right bin.
pub fn histogram_bin(ones: usize, total: usize) -> usize {
    ((ones * HISTOGRAM_BINS) / total.max(1)).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneCounts {
    pub indoor: usize,
    pub outdoor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub type_counts: BTreeMap<String, usize>,
    pub scene_counts: SceneCounts,
    /// Lower edges of the histogram bins, in percent.
    pub bin_lower_percent: Vec<u32>,
    pub histogram: Vec<usize>,
    pub histogram_by_type: BTreeMap<String, Vec<usize>>,
}

/// One record's contribution: tags and its mask's (set, total) pixel counts.
#[derive(Debug, Clone, Copy)]
pub struct StatsEntry {
    pub meta: PairMeta,
    pub ones: usize,
    pub total: usize,
}

impl StatsEntry {
    pub fn from_mask(meta: PairMeta, mask: &BinaryMask) -> Self {
        Self {
            meta,
            ones: mask.count_ones(),
            total: mask.len(),
        }
    }
}

impl StatsReport {
    pub fn from_entries(entries: &[StatsEntry]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyManifest.into());
        }
        let mut type_counts: BTreeMap<String, usize> =
            HazardType::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
        let mut by_type: BTreeMap<String, Vec<usize>> = HazardType::ALL
            .iter()
            .map(|t| (t.as_str().to_string(), vec![0; HISTOGRAM_BINS]))
            .collect();
        let mut histogram = vec![0; HISTOGRAM_BINS];
        let mut scene = SceneCounts { indoor: 0, outdoor: 0 };
        for e in entries {
            let key = e.meta.type_tag.as_str();
            let bin = histogram_bin(e.ones, e.total);
            *type_counts.get_mut(key).expect("all types present") += 1;
            by_type.get_mut(key).expect("all types present")[bin] += 1;
            histogram[bin] += 1;
            match e.meta.scene_tag {
                SceneTag::Indoor => scene.indoor += 1,
                SceneTag::Outdoor => scene.outdoor += 1,
            }
        }
        Ok(Self {
            total: entries.len(),
            type_counts,
            scene_counts: scene,
            bin_lower_percent: (0..HISTOGRAM_BINS as u32).map(|i| i * 10).collect(),
            histogram,
            histogram_by_type: by_type,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self).map_err(Error::from)? + "\n")
    }
}

/// Reads every record's mask and tags. Only masks are decoded.
pub fn dataset_stats(manifest: &DatasetManifest) -> Result<StatsReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest.into());
    }
    let entries = manifest
        .records
        .par_iter()
        .map(|d| {
            let mask = BinaryMask::load(&manifest.resolve(&d.mask))?;
            let meta = manifest.load_meta(d)?;
            Ok(StatsEntry::from_mask(meta, &mask))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    StatsReport::from_entries(&entries)
}
