//! Seeded train/val/test partitioning.
//!
//! Part sizes are `⌊n·r⌋`; the (at most two) leftover records go to train,
//! then val, then test, skipping any part with a zero ratio.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::pair::HazardType;

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

impl FromStr for SplitPart {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(SplitPart::Train),
            "val" | "validation" => Ok(SplitPart::Val),
            "test" => Ok(SplitPart::Test),
            other => Err(format!("unknown split part {other:?}; expected train, val or test")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Uniform shuffle over the whole manifest.
    #[default]
    Uniform,
    /// Shuffle and split each hazard type separately, then concatenate.
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn part(&self, part: SplitPart) -> &[String] {
        match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn validate_ratios(ratios: &[f64; 3]) -> Result<()> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (sum - 1.0).abs() > RATIO_TOLERANCE {
        return Err(Error::BadRatios(ratios.to_vec()));
    }
    Ok(())
}

/// Part sizes for `n` records.
pub fn part_sizes(n: usize, ratios: &[f64; 3]) -> Result<[usize; 3]> {
    validate_ratios(ratios)?;
    // the epsilon absorbs products like 700 * 0.7 = 489.99999999999994
    let mut sizes = ratios.map(|r| ((n as f64) * r + 1e-9).floor() as usize);
    let mut leftover = n - sizes.iter().sum::<usize>().min(n);
    while leftover > 0 {
        for (i, size) in sizes.iter_mut().enumerate() {
            if leftover == 0 {
                break;
            }
            if ratios[i] > 0.0 {
                *size += 1;
                leftover -= 1;
            }
        }
    }
    Ok(sizes)
}

fn split_ids(ids: &[String], ratios: &[f64; 3], rng: &mut ChaCha8Rng) -> Result<[Vec<String>; 3]> {
    let sizes = part_sizes(ids.len(), ratios)?;
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(rng);
    let val_and_test = shuffled.split_off(sizes[0]);
    let (val, test) = val_and_test.split_at(sizes[1]);
    Ok([shuffled, val.to_vec(), test.to_vec()])
}

/// Seeded uniform split of the manifest's pair ids. A pure function of the
/// manifest order, the ratios and the seed.
pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let ids: Vec<String> = manifest.pair_ids().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [train, val, test] = split_ids(&ids, &ratios, &mut rng)?;
    Ok(SplitAssignment {
        seed,
        ratios,
        train,
        val,
        test,
    })
}

/// Split performed independently within each hazard type, using the tags
/// from each record's metadata file.
pub fn split_dataset_stratified(
    manifest: &DatasetManifest,
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(Error::EmptyManifest);
    }
    validate_ratios(&ratios)?;
    let mut groups: Vec<(HazardType, Vec<String>)> =
        HazardType::ALL.iter().map(|&t| (t, Vec::new())).collect();
    for desc in &manifest.records {
        let meta = manifest.load_meta(desc)?;
        let slot = groups
            .iter_mut()
            .find(|(t, _)| *t == meta.type_tag)
            .expect("every hazard type has a group");
        slot.1.push(desc.pair_id.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment {
        seed,
        ratios,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (_, ids) in groups.iter().filter(|(_, ids)| !ids.is_empty()) {
        let [tr, va, te] = split_ids(ids, &ratios, &mut rng)?;
        out.train.extend(tr);
        out.val.extend(va);
        out.test.extend(te);
    }
    Ok(out)
}

pub fn split_with_mode(
    manifest: &DatasetManifest,
    ratios: [f64; 3],
    seed: u64,
    mode: SplitMode,
) -> Result<SplitAssignment> {
    match mode {
        SplitMode::Uniform => split_dataset(manifest, ratios, seed),
        SplitMode::Stratified => split_dataset_stratified(manifest, ratios, seed),
    }
}
