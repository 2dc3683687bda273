//! Core building blocks for bi-temporal housekeeping change detection.
//!
//! This crate holds the pixel containers ([`ImageBuffer`], [`BinaryMask`]),
//! the paired record type ([`HousekeepingPair`]), dataset manifests and the
//! seeded train/val/test split, the paired augmentation pipeline, and the
//! pixel-level metric suite. Everything here is free of any tensor runtime.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod image;
pub mod metrics;
pub mod pair;
pub mod split;
pub mod synthetic;

pub use crate::error::{Error, Result};
pub use crate::image::{BinaryMask, ImageBuffer};
pub use crate::pair::{HazardType, HousekeepingPair, SceneTag};
