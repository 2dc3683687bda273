//! Rigid (rotation + translation) registration from matched keypoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PrepError, Result};
use crate::matching::MatchSet;
use crate::sift::KeypointSet;

/// `p' = R(θ)·p + t`, with `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]` acting
/// on `(x, y)` pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Radians.
    pub rotation: f64,
    /// `(t_x, t_y)` in pixels.
    pub translation: [f64; 2],
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl RigidTransform {
    pub const IDENTITY: Self = Self {
        rotation: 0.0,
        translation: [0.0, 0.0],
    };

    pub fn new(rotation: f64, tx: f64, ty: f64) -> Self {
        Self {
            rotation,
            translation: [tx, ty],
        }
    }

    /// Rotation by `rotation` about `center`, followed by `shift`.
    pub fn about(center: [f64; 2], rotation: f64, shift: [f64; 2]) -> Self {
        let r = Self::new(rotation, 0.0, 0.0).apply(center);
        Self::new(rotation, center[0] - r[0] + shift[0], center[1] - r[1] + shift[1])
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation.sin_cos();
        [
            c * p[0] - s * p[1] + self.translation[0],
            s * p[0] + c * p[1] + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.rotation.sin_cos();
        let [tx, ty] = self.translation;
        Self {
            rotation: -self.rotation,
            translation: [-(c * tx + s * ty), -(-s * tx + c * ty)],
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let t = self.apply(other.translation);
        Self {
            rotation: self.rotation + other.rotation,
            translation: t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.is_finite() && self.translation.iter().all(|v| v.is_finite())
    }

    pub fn rotation_degrees(&self) -> f64 {
        self.rotation.to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Reprojection error, in pixels, below which a match is an inlier.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Early exit once a sample free of outliers has been drawn with this
    /// probability.
    pub confidence: f64,
    pub seed: u64,
    /// Least-squares refit rounds on the consensus set.
    pub refit_rounds: usize,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 3.0,
            max_iterations: 1000,
            confidence: 0.999,
            seed: 0,
            refit_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub transform: RigidTransform,
    /// Indices into the match list.
    pub inliers: Vec<usize>,
    /// Root-mean-square reprojection error over the inliers.
    pub rms_error: f64,
}

const COINCIDENT_EPS: f64 = 1e-6;

/// Least-squares rigid fit of `src → dst`.
pub fn fit_rigid(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Option<RigidTransform> {
    let n = src.len();
    if n == 0 || n != dst.len() {
        return None;
    }
    let mean = |pts: &[[f64; 2]]| {
        let s = pts.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n as f64, s[1] / n as f64]
    };
    let (ms, md) = (mean(src), mean(dst));
    let (mut sin_acc, mut cos_acc) = (0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p[0] - ms[0], p[1] - ms[1]);
        let (qx, qy) = (q[0] - md[0], q[1] - md[1]);
        cos_acc += px * qx + py * qy;
        sin_acc += px * qy - py * qx;
    }
    if sin_acc.abs() < 1e-300 && cos_acc.abs() < 1e-300 {
        return None;
    }
    let theta = sin_acc.atan2(cos_acc);
    let r = RigidTransform::new(theta, 0.0, 0.0).apply(ms);
    Some(RigidTransform::new(theta, md[0] - r[0], md[1] - r[1]))
}

fn spread(pts: &[[f64; 2]]) -> f64 {
    let first = pts[0];
    pts.iter()
        .map(|p| ((p[0] - first[0]).powi(2) + (p[1] - first[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

#[inline]
fn residual2(t: &RigidTransform, p: [f64; 2], q: [f64; 2]) -> f64 {
    let m = t.apply(p);
    (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
}

fn inliers_of(t: &RigidTransform, src: &[[f64; 2]], dst: &[[f64; 2]], thr2: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut cost = 0.0;
    for (i, (p, q)) in src.iter().zip(dst).enumerate() {
        let r2 = residual2(t, *p, *q);
        if r2 <= thr2 {
            idx.push(i);
            cost += r2;
        } else {
            cost += thr2;
        }
    }
    (idx, cost)
}

/// Robust rigid fit over matched points `src[i] ↔ dst[i]`.
pub fn estimate_rigid(src: &[[f64; 2]], dst: &[[f64; 2]], cfg: &ConsensusConfig) -> Result<Alignment> {
    let n = src.len();
    if n < 2 {
        return Err(PrepError::InsufficientMatches(n));
    }
    if spread(src) < COINCIDENT_EPS || spread(dst) < COINCIDENT_EPS {
        return Err(PrepError::DegenerateConfiguration);
    }
    let thr = cfg.inlier_threshold;
    let thr2 = thr * thr;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(RigidTransform, Vec<usize>, f64)> = None;
    let mut needed = cfg.max_iterations;
    let mut iter = 0;
    while iter < needed.min(cfg.max_iterations) {
        iter += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let dp = ((src[i][0] - src[j][0]).powi(2) + (src[i][1] - src[j][1]).powi(2)).sqrt();
        let dq = ((dst[i][0] - dst[j][0]).powi(2) + (dst[i][1] - dst[j][1]).powi(2)).sqrt();
        // a rigid motion preserves lengths, so these two cannot both be inliers
        if dp < COINCIDENT_EPS || dq < COINCIDENT_EPS || (dp - dq).abs() > 2.0 * thr {
            continue;
        }
        let Some(t) = fit_rigid(&[src[i], src[j]], &[dst[i], dst[j]]) else {
            continue;
        };
        let (idx, cost) = inliers_of(&t, src, dst, thr2);
        let better = match &best {
            None => true,
            Some((_, bi, bc)) => idx.len() > bi.len() || (idx.len() == bi.len() && cost < *bc),
        };
        if better {
            let w = idx.len() as f64 / n as f64;
            let p_good = w * w;
            needed = if p_good >= 1.0 {
                0
            } else {
                let k = (1.0 - cfg.confidence).ln() / (1.0 - p_good).ln();
                if k.is_finite() {
                    k.ceil().max(0.0) as usize
                } else {
                    cfg.max_iterations
                }
            };
            best = Some((t, idx, cost));
        }
    }
    let (mut t, mut idx, _) = best.ok_or(PrepError::DegenerateConfiguration)?;
    for _ in 0..cfg.refit_rounds {
        let s: Vec<_> = idx.iter().map(|&k| src[k]).collect();
        let d: Vec<_> = idx.iter().map(|&k| dst[k]).collect();
        let Some(refit) = fit_rigid(&s, &d) else { break };
        let (next, _) = inliers_of(&refit, src, dst, thr2);
        if next.len() < 2 || next.len() < idx.len() {
            break;
        }
        let unchanged = next == idx;
        t = refit;
        idx = next;
        if unchanged {
            break;
        }
    }
    if !t.is_finite() {
        return Err(PrepError::DegenerateConfiguration);
    }
    let rms_error = (idx.iter().map(|&k| residual2(&t, src[k], dst[k])).sum::<f64>() / idx.len() as f64).sqrt();
    Ok(Alignment {
        transform: t,
        inliers: idx,
        rms_error,
    })
}

/// Transform mapping coordinates of `a` (the good image) onto `b` (the poor
/// image), estimated from `a → b` matches.
pub fn estimate_alignment(matches: &MatchSet, a: &KeypointSet, b: &KeypointSet) -> Result<Alignment> {
    estimate_alignment_with(matches, a, b, &ConsensusConfig::default())
}

pub fn estimate_alignment_with(
    matches: &MatchSet,
    a: &KeypointSet,
    b: &KeypointSet,
    cfg: &ConsensusConfig,
) -> Result<Alignment> {
    let to64 = |p: [f32; 2]| [p[0] as f64, p[1] as f64];
    let src: Vec<_> = matches.pairs.iter().map(|m| to64(a.locations[m.query])).collect();
    let dst: Vec<_> = matches.pairs.iter().map(|m| to64(b.locations[m.train])).collect();
    estimate_rigid(&src, &dst, cfg)
}
