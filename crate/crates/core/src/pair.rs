use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, ImageBuffer};

/// Cause of the poor-housekeeping condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HazardType {
    #[serde(alias = "debris")]
    Debris,
    #[serde(alias = "rebars")]
    Rebars,
    #[serde(alias = "steel_pipes", alias = "steelpipes")]
    SteelPipes,
    #[serde(alias = "water_ponding", alias = "waterponding")]
    WaterPonding,
    #[serde(alias = "others")]
    Others,
}

impl HazardType {
    pub const ALL: [HazardType; 5] = [
        HazardType::Debris,
        HazardType::Rebars,
        HazardType::SteelPipes,
        HazardType::WaterPonding,
        HazardType::Others,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HazardType::Debris => "Debris",
            HazardType::Rebars => "Rebars",
            HazardType::SteelPipes => "SteelPipes",
            HazardType::WaterPonding => "WaterPonding",
            HazardType::Others => "Others",
        }
    }
}

impl std::fmt::Display for HazardType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SceneTag {
    #[serde(alias = "indoor")]
    Indoor,
    #[serde(alias = "outdoor")]
    Outdoor,
}

/// Per-pair metadata, stored on disk as `meta.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMeta {
    pub type_tag: HazardType,
    pub scene_tag: SceneTag,
}

/// One bi-temporal record: the poor-housekeeping image, the (possibly
/// aligned) good-housekeeping image of the same spot, and the change mask
/// annotated on the poor image.
///
/// The mask always matches the poor image. The good image may differ in size
/// until the pair has gone through alignment; [`HousekeepingPair::is_prepared`]
/// reports whether all three agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HousekeepingPair {
    pub pair_id: String,
    pub poor: ImageBuffer,
    pub good: ImageBuffer,
    pub mask: BinaryMask,
    pub type_tag: HazardType,
    pub scene_tag: SceneTag,
}

impl HousekeepingPair {
    pub fn new(
        pair_id: impl Into<String>,
        poor: ImageBuffer,
        good: ImageBuffer,
        mask: BinaryMask,
        meta: PairMeta,
    ) -> Result<Self> {
        if mask.dims() != poor.dims() {
            return Err(Error::DimensionMismatch {
                expected: poor.dims(),
                actual: mask.dims(),
            });
        }
        Ok(Self {
            pair_id: pair_id.into(),
            poor,
            good,
            mask,
            type_tag: meta.type_tag,
            scene_tag: meta.scene_tag,
        })
    }

    pub fn meta(&self) -> PairMeta {
        PairMeta {
            type_tag: self.type_tag,
            scene_tag: self.scene_tag,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.poor.dims()
    }

    pub fn is_prepared(&self) -> bool {
        self.good.dims() == self.poor.dims() && self.mask.dims() == self.poor.dims()
    }

    pub fn ensure_prepared(&self) -> Result<()> {
        if self.is_prepared() {
            Ok(())
        } else {
            Err(Error::UnpreparedPair(self.pair_id.clone()))
        }
    }

    /// Resizes the good image onto the poor image grid without any
    /// registration. Used for the unaligned (raw) experiment condition.
    pub fn with_good_resized(&self) -> Result<Self> {
        let (h, w) = self.poor.dims();
        let mut out = self.clone();
        out.good = self.good.resize_bilinear(h, w)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_accept_snake_case_aliases() {
        let m: PairMeta =
            serde_json::from_str(r#"{"type_tag":"water_ponding","scene_tag":"outdoor"}"#).unwrap();
        assert_eq!(m.type_tag, HazardType::WaterPonding);
        assert_eq!(m.scene_tag, SceneTag::Outdoor);
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type_tag":"WaterPonding","scene_tag":"Outdoor"}"#
        );
    }

    #[test]
    fn mask_must_match_poor_image() {
        let poor = ImageBuffer::filled(4, 4, [0, 0, 0]).unwrap();
        let good = ImageBuffer::filled(6, 6, [0, 0, 0]).unwrap();
        let meta = PairMeta {
            type_tag: HazardType::Debris,
            scene_tag: SceneTag::Indoor,
        };
        let err = HousekeepingPair::new("a", poor.clone(), good.clone(), BinaryMask::zeros(2, 2).unwrap(), meta);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));

        let pair = HousekeepingPair::new("a", poor, good, BinaryMask::zeros(4, 4).unwrap(), meta).unwrap();
        assert!(!pair.is_prepared());
        assert!(pair.with_good_resized().unwrap().is_prepared());
    }
}
