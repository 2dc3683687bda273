//! Paired augmentation and input normalization.
//!
//! Geometric parameters (rotation, crop window, flips) are sampled once per
//! call and applied identically to the poor image, the good image and the
//! mask. Photometric jitter is sampled separately for each image and never
//! touches the mask. Images are resampled bilinearly, masks with nearest
//! neighbour, and pixels exposed by rotation are filled with zero / class 0.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{round_u8, BinaryMask, ImageBuffer};
use crate::pair::HousekeepingPair;

/// Per-channel (R, G, B) normalization constants in 8-bit intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for NormalizationConstants {
    fn default() -> Self {
        Self {
            mean: [122.8, 116.7, 104.1],
            std: [68.5, 66.6, 70.3],
        }
    }
}

impl NormalizationConstants {
    pub fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidPolicy(format!("invalid normalization constants {self:?}")));
        }
        Ok(())
    }

    /// Value a zero-intensity pixel maps to, per channel.
    pub fn black_level(&self) -> [f32; 3] {
        [0, 1, 2].map(|c| (-self.mean[c] / self.std[c]) as f32)
    }
}

/// Normalizes to an H×W×3 array: `(value - mean[c]) / std[c]`.
pub fn normalize_image(image: &ImageBuffer, c: &NormalizationConstants) -> Array3<f32> {
    let (h, w) = image.dims();
    let raw = image.as_raw();
    Array3::from_shape_fn((h, w, 3), |(y, x, ch)| {
        ((raw[(y * w + x) * 3 + ch] as f64 - c.mean[ch]) / c.std[ch]) as f32
    })
}

/// A pair ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPair {
    pub pair_id: String,
    /// H×W×3.
    pub poor: Array3<f32>,
    /// H×W×3.
    pub good: Array3<f32>,
    pub mask: BinaryMask,
}

impl NormalizedPair {
    pub fn from_pair(pair: &HousekeepingPair, c: &NormalizationConstants) -> Result<Self> {
        pair.ensure_prepared()?;
        Ok(Self {
            pair_id: pair.pair_id.clone(),
            poor: normalize_image(&pair.poor, c),
            good: normalize_image(&pair.good, c),
            mask: pair.mask.clone(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotatePolicy {
    pub enabled: bool,
    pub prob: f64,
    /// Angles are drawn uniformly from `[-max_degrees, max_degrees]`.
    pub max_degrees: f64,
}

impl Default for RotatePolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            prob: 0.5,
            max_degrees: 180.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropPolicy {
    pub enabled: bool,
    /// `[height, width]`.
    pub size: [usize; 2],
    /// Largest share of the crop any single class may cover.
    pub cat_max_ratio: f64,
    pub max_retries: usize,
}

impl Default for CropPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            size: [256, 256],
            cat_max_ratio: 0.75,
            max_retries: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipPolicy {
    pub enabled: bool,
    pub horizontal_prob: f64,
    pub vertical_prob: f64,
}

impl Default for FlipPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            horizontal_prob: 0.5,
            vertical_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhotometricPolicy {
    pub enabled: bool,
    /// Probability each individual adjustment is applied.
    pub apply_prob: f64,
    /// Additive offset range in 8-bit intensity units.
    pub brightness_delta: f64,
    pub contrast_range: [f64; 2],
    pub saturation_range: [f64; 2],
    /// Hue rotation range in degrees.
    pub hue_degrees: f64,
}

impl Default for PhotometricPolicy {
    fn default() -> Self {
        Self {
            enabled: true,
            apply_prob: 0.5,
            brightness_delta: 10.0,
            contrast_range: [0.8, 1.2],
            saturation_range: [0.8, 1.2],
            hue_degrees: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    /// `[height, width]` every pair is resized to before any other step.
    /// An empty list disables resizing.
    #[serde(with = "optional_dims")]
    pub resize: Option<[usize; 2]>,
    pub rotate: RotatePolicy,
    pub crop: CropPolicy,
    pub flip: FlipPolicy,
    pub photometric: PhotometricPolicy,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            resize: Some([1024, 1024]),
            rotate: RotatePolicy::default(),
            crop: CropPolicy::default(),
            flip: FlipPolicy::default(),
            photometric: PhotometricPolicy::default(),
        }
    }
}

/// Serializes `Option<[usize; 2]>` as `[h, w]` or `[]`, so "no resize"
/// survives formats without a null such as TOML.
pub mod optional_dims {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[usize; 2]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(d) => s.collect_seq(d.iter()),
            None => s.collect_seq(std::iter::empty::<usize>()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[usize; 2]>, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        match v.as_slice() {
            [] => Ok(None),
            &[h, w] => Ok(Some([h, w])),
            _ => Err(D::Error::custom(format!("expected [height, width] or [], got {} values", v.len()))),
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidPolicy(format!("{name} = {p} is not a probability")))
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidPolicy(format!("{name} = {r:?} is not an ordered non-negative range")))
    }
}

impl AugmentPolicy {
    /// A policy that returns its input unchanged.
    pub fn identity() -> Self {
        Self {
            resize: None,
            rotate: RotatePolicy {
                enabled: false,
                ..Default::default()
            },
            crop: CropPolicy {
                enabled: false,
                ..Default::default()
            },
            flip: FlipPolicy {
                enabled: false,
                horizontal_prob: 0.0,
                vertical_prob: 0.0,
            },
            photometric: PhotometricPolicy {
                enabled: false,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("rotate.prob", self.rotate.prob)?;
        check_prob("flip.horizontal_prob", self.flip.horizontal_prob)?;
        check_prob("flip.vertical_prob", self.flip.vertical_prob)?;
        check_prob("photometric.apply_prob", self.photometric.apply_prob)?;
        check_prob("crop.cat_max_ratio", self.crop.cat_max_ratio)?;
        if !(self.rotate.max_degrees.is_finite() && self.rotate.max_degrees >= 0.0) {
            return Err(Error::InvalidPolicy("rotate.max_degrees must be >= 0".into()));
        }
        if self.crop.size.contains(&0) {
            return Err(Error::InvalidPolicy("crop.size must be positive".into()));
        }
        if let Some(r) = self.resize {
            if r.contains(&0) {
                return Err(Error::InvalidPolicy("resize must be positive".into()));
            }
            if self.crop.enabled && (self.crop.size[0] > r[0] || self.crop.size[1] > r[1]) {
                return Err(Error::CropTooLarge {
                    crop: (self.crop.size[0], self.crop.size[1]),
                    image: (r[0], r[1]),
                });
            }
        }
        let p = &self.photometric;
        if !(p.brightness_delta.is_finite() && p.brightness_delta >= 0.0 && p.hue_degrees.is_finite() && p.hue_degrees >= 0.0) {
            return Err(Error::InvalidPolicy("photometric deltas must be >= 0".into()));
        }
        check_range("photometric.contrast_range", p.contrast_range)?;
        check_range("photometric.saturation_range", p.saturation_range)?;
        Ok(())
    }
}

/// Geometric parameters shared by all three members of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricSample {
    pub rotation_degrees: Option<f64>,
    /// `(top, left, height, width)`.
    pub crop: Option<(usize, usize, usize, usize)>,
    pub crop_attempts: usize,
    /// Whether the emitted crop met the class-dominance cap.
    pub crop_satisfied: bool,
    pub hflip: bool,
    pub vflip: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PhotometricSample {
    brightness: Option<f64>,
    contrast: Option<f64>,
    saturation: Option<f64>,
    hue: Option<f64>,
}

fn maybe(rng: &mut ChaCha8Rng, enabled: bool, p: f64) -> bool {
    enabled && p > 0.0 && rng.random::<f64>() < p
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn sample_photometric(rng: &mut ChaCha8Rng, p: &PhotometricPolicy) -> PhotometricSample {
    let mut draw = |lo: f64, hi: f64| maybe(rng, p.enabled, p.apply_prob).then(|| (lo, hi));
    let b = draw(-p.brightness_delta, p.brightness_delta);
    let c = draw(p.contrast_range[0], p.contrast_range[1]);
    let s = draw(p.saturation_range[0], p.saturation_range[1]);
    let h = draw(-p.hue_degrees, p.hue_degrees);
    PhotometricSample {
        brightness: b.map(|(lo, hi)| uniform(rng, lo, hi)),
        contrast: c.map(|(lo, hi)| uniform(rng, lo, hi)),
        saturation: s.map(|(lo, hi)| uniform(rng, lo, hi)),
        hue: h.map(|(lo, hi)| uniform(rng, lo, hi)),
    }
}

/// Rotates about the image centre, filling exposed pixels with zero.
pub fn rotate_image(image: &ImageBuffer, degrees: f64) -> ImageBuffer {
    let (h, w) = image.dims();
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    ImageBuffer::from_fn(h, w, |y, x| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        // inverse rotation maps output back to source
        let sx = c * dx + s * dy + cx;
        let sy = -s * dx + c * dy + cy;
        match image.sample_bilinear(sx, sy) {
            Some(v) => [round_u8(v[0]), round_u8(v[1]), round_u8(v[2])],
            None => [0, 0, 0],
        }
    })
    .expect("same dims")
}

/// Nearest-neighbour counterpart of [`rotate_image`]; exposed pixels are class 0.
pub fn rotate_mask(mask: &BinaryMask, degrees: f64) -> BinaryMask {
    let (h, w) = mask.dims();
    let (s, c) = degrees.to_radians().sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    BinaryMask::from_fn(h, w, |y, x| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        let sx = (c * dx + s * dy + cx).round();
        let sy = (-s * dx + c * dy + cy).round();
        if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
            mask.get(sy as usize, sx as usize) == 1
        } else {
            false
        }
    })
    .expect("same dims")
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / d).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    (r + m, g + m, b + m)
}

fn luma(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

fn apply_photometric(image: &ImageBuffer, s: &PhotometricSample) -> ImageBuffer {
    if s.brightness.is_none() && s.contrast.is_none() && s.saturation.is_none() && s.hue.is_none() {
        return image.clone();
    }
    let mut px: Vec<[f64; 3]> = image
        .as_raw()
        .chunks_exact(3)
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    let clamp = |v: f64| v.clamp(0.0, 255.0);
    if let Some(delta) = s.brightness {
        px.iter_mut().for_each(|p| p.iter_mut().for_each(|v| *v = clamp(*v + delta)));
    }
    if let Some(alpha) = s.contrast {
        let mean = px.iter().map(|p| luma(*p)).sum::<f64>() / px.len() as f64;
        px.iter_mut()
            .for_each(|p| p.iter_mut().for_each(|v| *v = clamp(mean + alpha * (*v - mean))));
    }
    if let Some(alpha) = s.saturation {
        px.iter_mut().for_each(|p| {
            let g = luma(*p);
            p.iter_mut().for_each(|v| *v = clamp(g + alpha * (*v - g)));
        });
    }
    if let Some(deg) = s.hue {
        px.iter_mut().for_each(|p| {
            let (h, sat, v) = rgb_to_hsv(p[0] / 255.0, p[1] / 255.0, p[2] / 255.0);
            let (r, g, b) = hsv_to_rgb(h + deg, sat, v);
            *p = [clamp(r * 255.0), clamp(g * 255.0), clamp(b * 255.0)];
        });
    }
    let data = px.iter().flat_map(|p| p.map(round_u8)).collect();
    ImageBuffer::new(image.height(), image.width(), data).expect("same dims")
}

fn dominant_share(mask: &BinaryMask, top: usize, left: usize, h: usize, w: usize) -> f64 {
    let mut ones = 0usize;
    for y in top..top + h {
        let row = &mask.as_raw()[y * mask.width() + left..y * mask.width() + left + w];
        ones += row.iter().map(|&v| v as usize).sum::<usize>();
    }
    let share = ones as f64 / (h * w) as f64;
    share.max(1.0 - share)
}

/// Applies the policy to a prepared pair. Deterministic in `(pair, policy, seed)`.
pub fn augment_pair(pair: &HousekeepingPair, policy: &AugmentPolicy, seed: u64) -> Result<HousekeepingPair> {
    augment_pair_with_sample(pair, policy, seed).map(|(p, _)| p)
}

/// Like [`augment_pair`], also returning the geometric parameters used.
pub fn augment_pair_with_sample(
    pair: &HousekeepingPair,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<(HousekeepingPair, GeometricSample)> {
    policy.validate()?;
    pair.ensure_prepared()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = pair.clone();

    if let Some([h, w]) = policy.resize {
        out.poor = out.poor.resize_bilinear(h, w)?;
        out.good = out.good.resize_bilinear(h, w)?;
        out.mask = out.mask.resize_nearest(h, w)?;
    }

    let mut sample = GeometricSample {
        rotation_degrees: None,
        crop: None,
        crop_attempts: 0,
        crop_satisfied: false,
        hflip: false,
        vflip: false,
    };

    if maybe(&mut rng, policy.rotate.enabled, policy.rotate.prob) {
        let m = policy.rotate.max_degrees;
        let deg = uniform(&mut rng, -m, m);
        sample.rotation_degrees = Some(deg);
        out.poor = rotate_image(&out.poor, deg);
        out.good = rotate_image(&out.good, deg);
        out.mask = rotate_mask(&out.mask, deg);
    }

    if policy.crop.enabled {
        let [ch, cw] = policy.crop.size;
        let (h, w) = out.dims();
        if ch > h || cw > w {
            return Err(Error::CropTooLarge {
                crop: (ch, cw),
                image: (h, w),
            });
        }
        let mut window = (0, 0, ch, cw);
        for attempt in 0..=policy.crop.max_retries {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            window = (top, left, ch, cw);
            sample.crop_attempts = attempt + 1;
            if dominant_share(&out.mask, top, left, ch, cw) <= policy.crop.cat_max_ratio {
                sample.crop_satisfied = true;
                break;
            }
        }
        sample.crop = Some(window);
        let (t, l, hh, ww) = window;
        out.poor = out.poor.crop(t, l, hh, ww)?;
        out.good = out.good.crop(t, l, hh, ww)?;
        out.mask = out.mask.crop(t, l, hh, ww)?;
    }

    sample.hflip = maybe(&mut rng, policy.flip.enabled, policy.flip.horizontal_prob);
    sample.vflip = maybe(&mut rng, policy.flip.enabled, policy.flip.vertical_prob);
    if sample.hflip {
        out.poor = out.poor.flip_horizontal();
        out.good = out.good.flip_horizontal();
        out.mask = out.mask.flip_horizontal();
    }
    if sample.vflip {
        out.poor = out.poor.flip_vertical();
        out.good = out.good.flip_vertical();
        out.mask = out.mask.flip_vertical();
    }

    let poor_jitter = sample_photometric(&mut rng, &policy.photometric);
    let good_jitter = sample_photometric(&mut rng, &policy.photometric);
    out.poor = apply_photometric(&out.poor, &poor_jitter);
    out.good = apply_photometric(&out.good, &good_jitter);

    Ok((out, sample))
}

/// Validation-time preparation: optional resize only.
pub fn prepare_eval(pair: &HousekeepingPair, resize: Option<[usize; 2]>) -> Result<HousekeepingPair> {
    pair.ensure_prepared()?;
    let mut out = pair.clone();
    if let Some([h, w]) = resize {
        out.poor = out.poor.resize_bilinear(h, w)?;
        out.good = out.good.resize_bilinear(h, w)?;
        out.mask = out.mask.resize_nearest(h, w)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::pair::{HazardType, PairMeta, SceneTag};

    fn meta() -> PairMeta {
        PairMeta {
            type_tag: HazardType::Debris,
            scene_tag: SceneTag::Outdoor,
        }
    }

    fn textured_pair(h: usize, w: usize) -> HousekeepingPair {
        let poor = ImageBuffer::from_fn(h, w, |y, x| {
            [((x * 7 + y * 3) % 256) as u8, ((x * x + y) % 251) as u8, ((y * 11) % 256) as u8]
        })
        .unwrap();
        let good = ImageBuffer::from_fn(h, w, |y, x| [((x + y) % 256) as u8, 80, 40]).unwrap();
        let mask = BinaryMask::from_fn(h, w, |y, x| (x / 16 + y / 16) % 2 == 0).unwrap();
        HousekeepingPair::new("t", poor, good, mask, meta()).unwrap()
    }

    /// Poor image and mask both encode the same grid pattern, so any
    /// geometric desynchronisation shows up as disagreement.
    fn grid_pair(h: usize, w: usize) -> HousekeepingPair {
        let mask = BinaryMask::from_fn(h, w, |y, x| (x / 8) % 2 == 0 || (y / 8) % 3 == 0).unwrap();
        let poor = ImageBuffer::from_fn(h, w, |y, x| {
            let v = mask.get(y, x) * 255;
            [v, v, v]
        })
        .unwrap();
        HousekeepingPair::new("g", poor.clone(), poor, mask, meta()).unwrap()
    }

    #[test]
    fn identity_policy_returns_input() {
        let pair = textured_pair(40, 50);
        for seed in 0..5 {
            assert_eq!(augment_pair(&pair, &AugmentPolicy::identity(), seed).unwrap(), pair);
        }
    }

    #[test]
    fn enabled_policy_emits_crop_size() {
        let pair = textured_pair(300, 280);
        let mut policy = AugmentPolicy::default();
        policy.resize = Some([320, 320]);
        for seed in 0..6 {
            let out = augment_pair(&pair, &policy, seed).unwrap();
            assert_eq!(out.poor.dims(), (256, 256));
            assert_eq!(out.good.dims(), (256, 256));
            assert_eq!(out.mask.dims(), (256, 256));
        }
    }

    #[test]
    fn crop_larger_than_image_is_rejected() {
        let pair = textured_pair(100, 100);
        let mut policy = AugmentPolicy::identity();
        policy.crop.enabled = true;
        assert!(matches!(augment_pair(&pair, &policy, 0), Err(Error::CropTooLarge { .. })));
        policy.resize = Some([128, 128]);
        assert!(matches!(policy.validate(), Err(Error::CropTooLarge { .. })));
    }

    #[test]
    fn identical_images_stay_identical_without_photometric() {
        let base = textured_pair(120, 120);
        let pair = HousekeepingPair::new("same", base.poor.clone(), base.poor.clone(), base.mask.clone(), meta()).unwrap();
        let mut policy = AugmentPolicy::default();
        policy.resize = Some([100, 100]);
        policy.crop.size = [64, 64];
        policy.photometric.enabled = false;
        for seed in 0..10 {
            let out = augment_pair(&pair, &policy, seed).unwrap();
            assert_eq!(out.poor, out.good);
        }
    }

    #[test]
    fn grid_stays_registered_without_rotation() {
        let pair = grid_pair(96, 96);
        let mut policy = AugmentPolicy::default();
        policy.resize = None;
        policy.rotate.enabled = false;
        policy.crop.size = [48, 48];
        for seed in 0..20 {
            let out = augment_pair(&pair, &policy, seed).unwrap();
            for y in 0..48 {
                for x in 0..48 {
                    let on = out.mask.get(y, x) == 1;
                    let v = out.poor.pixel(y, x)[0];
                    // photometric jitter moves intensities but not across mid-grey
                    assert_eq!(on, v > 127, "seed {seed} at ({y},{x}) value {v}");
                }
            }
        }
    }

    #[test]
    fn grid_mostly_registered_with_rotation() {
        let pair = grid_pair(128, 128);
        let mut policy = AugmentPolicy::identity();
        policy.rotate.enabled = true;
        policy.rotate.prob = 1.0;
        for seed in 0..8 {
            let (out, s) = augment_pair_with_sample(&pair, &policy, seed).unwrap();
            assert!(s.rotation_degrees.is_some());
            let agree = (0..128 * 128)
                .filter(|i| {
                    let (y, x) = (i / 128, i % 128);
                    (out.mask.get(y, x) == 1) == (out.poor.pixel(y, x)[0] > 127)
                })
                .count();
            // bilinear image edges vs nearest mask edges differ by at most a pixel
            assert!(agree as f64 / (128.0 * 128.0) > 0.9, "seed {seed}: {agree}");
        }
    }

    #[test]
    fn normalize_known_values() {
        let c = NormalizationConstants::default();
        let img = ImageBuffer::from_fn(1, 2, |_, x| if x == 0 { [255, 0, 0] } else { [123, 117, 104] }).unwrap();
        let n = normalize_image(&img, &c);
        assert!((n[[0, 0, 0]] - 1.930).abs() < 1e-3);
        assert!((n[[0, 0, 0]] as f64 - (255.0 - 122.8) / 68.5).abs() < 1e-6);
        // exactly-at-mean pixels map to zero
        let at_mean = ImageBuffer::filled(2, 2, [0, 0, 0]).unwrap();
        let zero = normalize_image(
            &at_mean,
            &NormalizationConstants {
                mean: [0.0; 3],
                std: [1.0; 3],
            },
        );
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_at_mean_normalizes_to_zero() {
        let c = NormalizationConstants {
            mean: [120.0, 100.0, 80.0],
            std: [60.0, 60.0, 60.0],
        };
        let img = ImageBuffer::filled(3, 4, [120, 100, 80]).unwrap();
        assert!(normalize_image(&img, &c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2, 0.4, 0.9), (1.0, 0.0, 0.0), (0.5, 0.5, 0.5), (0.1, 0.9, 0.3)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-12 && (g - g2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_policies() {
        let mut p = AugmentPolicy::default();
        p.rotate.prob = 1.5;
        assert!(p.validate().is_err());
        let mut p = AugmentPolicy::default();
        p.photometric.contrast_range = [1.2, 0.8];
        assert!(p.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deterministic_binary_and_capped(seed in any::<u64>()) {
            let pair = textured_pair(96, 96);
            let mut policy = AugmentPolicy::default();
            policy.resize = Some([80, 80]);
            policy.crop.size = [48, 48];
            let (a, s) = augment_pair_with_sample(&pair, &policy, seed).unwrap();
            let b = augment_pair(&pair, &policy, seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.mask.as_raw().iter().all(|&v| v <= 1));
            prop_assert!(s.crop_attempts >= 1 && s.crop_attempts <= policy.crop.max_retries + 1);
            if s.crop_satisfied {
                let share = a.mask.count_ones() as f64 / a.mask.len() as f64;
                prop_assert!(share.max(1.0 - share) <= 0.75);
            }
        }
    }
}
