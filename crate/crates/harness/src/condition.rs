use hkcd_core::augment::{NormalizationConstants, NormalizedPair};
use hkcd_model::{blackout_good, blackout_poor};
use serde::{Deserialize, Serialize};

/// Input masking used by the ablation and segmentation-mode experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputCondition {
    #[default]
    All,
    WithoutGood,
    WithoutPoor,
    WithoutBoth,
}

impl InputCondition {
    pub fn apply(self, pair: &NormalizedPair, consts: &NormalizationConstants) -> NormalizedPair {
        match self {
            Self::All => pair.clone(),
            Self::WithoutGood => blackout_good(pair, consts),
            Self::WithoutPoor => blackout_poor(pair, consts),
            Self::WithoutBoth => blackout_poor(&blackout_good(pair, consts), consts),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::All => "Input with All images",
            Self::WithoutGood => "Input without good housekeeping images",
            Self::WithoutPoor => "Input without poor housekeeping images",
            Self::WithoutBoth => "Input without any images",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::WithoutGood => "without_good",
            Self::WithoutPoor => "without_poor",
            Self::WithoutBoth => "without_both",
        }
    }
}
