//! Dataset manifests and pair loading.
//!
//! On disk a dataset is a directory of pair folders:
//!
//! ```text
//! <root>/<pair_id>/poor.png
//!                  good.png
//!                  mask.png
//!                  meta.json   {"type_tag": "...", "scene_tag": "..."}
//! ```
//!
//! A manifest is a JSON document listing those records with paths relative
//! to the manifest's own directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, ImageBuffer};
use crate::pair::{HousekeepingPair, PairMeta};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Paths of one record, relative to the manifest directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDescriptor {
    pub pair_id: String,
    pub poor: PathBuf,
    pub good: PathBuf,
    pub mask: PathBuf,
    pub meta: PathBuf,
}

impl PairDescriptor {
    /// Descriptor following the standard `<pair_id>/{poor,good,mask}.png` layout.
    pub fn standard(pair_id: &str) -> Self {
        let dir = PathBuf::from(pair_id);
        Self {
            pair_id: pair_id.to_string(),
            poor: dir.join("poor.png"),
            good: dir.join("good.png"),
            mask: dir.join("mask.png"),
            meta: dir.join("meta.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub records: Vec<PairDescriptor>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(base_dir: impl Into<PathBuf>, records: Vec<PairDescriptor>) -> Result<Self> {
        let m = Self {
            version: MANIFEST_VERSION,
            records,
            base_dir: base_dir.into(),
        };
        m.check_unique_ids()?;
        Ok(m)
    }

    /// Builds a manifest from a dataset directory. Every subdirectory holding a
    /// `poor.png` becomes a record; records are ordered by pair id.
    pub fn scan(root: &Path) -> Result<Self> {
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if path.is_dir() && path.join("poor.png").exists() {
                if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                    ids.push(name.to_string());
                }
            }
        }
        ids.sort();
        let records = ids.iter().map(|id| PairDescriptor::standard(id)).collect();
        let m = Self::new(root, records)?;
        m.check_files()?;
        Ok(m)
    }

    /// Reads a manifest file and checks ids are unique and all files exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check_unique_ids()?;
        m.check_files()?;
        Ok(m)
    }

    /// Loads a manifest from either a manifest file or a dataset directory.
    pub fn open(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let file = path.join(MANIFEST_FILE);
            if file.exists() {
                Self::load(&file)
            } else {
                Self::scan(path)
            }
        } else {
            Self::load(path)
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn pair_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.pair_id.as_str())
    }

    pub fn get(&self, pair_id: &str) -> Option<&PairDescriptor> {
        self.records.iter().find(|r| r.pair_id == pair_id)
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.base_dir.join(rel)
    }

    /// Manifest restricted to `ids`, in the order given.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let records = ids
            .iter()
            .map(|id| {
                self.get(id.as_ref())
                    .cloned()
                    .ok_or_else(|| Error::MissingFile(PathBuf::from(id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.base_dir.clone(), records)
    }

    pub fn load_pair(&self, desc: &PairDescriptor) -> Result<HousekeepingPair> {
        load_pair(&self.base_dir, desc)
    }

    pub fn load_meta(&self, desc: &PairDescriptor) -> Result<PairMeta> {
        read_meta(&self.resolve(&desc.meta))
    }

    pub fn load_all(&self) -> Result<Vec<HousekeepingPair>> {
        self.records.iter().map(|d| self.load_pair(d)).collect()
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.pair_id.as_str()) {
                return Err(Error::DuplicatePairId(r.pair_id.clone()));
            }
        }
        Ok(())
    }

    fn check_files(&self) -> Result<()> {
        for r in &self.records {
            for rel in [&r.poor, &r.good, &r.mask, &r.meta] {
                let p = self.resolve(rel);
                if !p.is_file() {
                    return Err(Error::MissingFile(p));
                }
            }
        }
        Ok(())
    }
}

/// Loads and validates one record. The mask is binarized (nonzero → 1) and
/// must match the poor image's size.
pub fn load_pair(base_dir: &Path, desc: &PairDescriptor) -> Result<HousekeepingPair> {
    let poor = ImageBuffer::load(&base_dir.join(&desc.poor))?;
    let good = ImageBuffer::load(&base_dir.join(&desc.good))?;
    let mask = BinaryMask::load(&base_dir.join(&desc.mask))?;
    let meta = read_meta(&base_dir.join(&desc.meta))?;
    HousekeepingPair::new(desc.pair_id.clone(), poor, good, mask, meta)
}

pub fn read_meta(path: &Path) -> Result<PairMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::BadMetadata {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes a pair in the standard layout under `root/<pair_id>/` and returns
/// its descriptor.
pub fn write_pair(root: &Path, pair: &HousekeepingPair) -> Result<PairDescriptor> {
    let desc = PairDescriptor::standard(&pair.pair_id);
    let dir = root.join(&pair.pair_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    pair.poor.save(&root.join(&desc.poor))?;
    pair.good.save(&root.join(&desc.good))?;
    pair.mask.save(&root.join(&desc.mask))?;
    let meta_path = root.join(&desc.meta);
    let meta = serde_json::to_string_pretty(&pair.meta())?;
    fs::write(&meta_path, meta + "\n").map_err(|e| Error::io(&meta_path, e))?;
    Ok(desc)
}

/// Writes every pair plus a `manifest.json` at `root`.
pub fn write_dataset(root: &Path, pairs: &[HousekeepingPair]) -> Result<DatasetManifest> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let records = pairs
        .iter()
        .map(|p| write_pair(root, p))
        .collect::<Result<Vec<_>>>()?;
    let manifest = DatasetManifest::new(root, records)?;
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}
