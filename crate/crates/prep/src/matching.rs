//! Exact two-nearest-neighbour descriptor matching with a distance-ratio test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sift::{KeypointSet, DESCRIPTOR_LEN};

pub const DEFAULT_RATIO: f32 = 0.7;

/// Nearest and second-nearest neighbour of one query descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub query: usize,
    pub train: usize,
    pub nearest_distance: f32,
    /// Absent when the train set has a single descriptor.
    pub second_distance: Option<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Index into the query set `a`.
    pub query: usize,
    /// Index into the train set `b`.
    pub train: usize,
    pub nearest_distance: f32,
    pub second_distance: f32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub pairs: Vec<Match>,
    /// Set when either input had no keypoints.
    pub empty_input: bool,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[inline]
fn sq_dist(a: &[f32; DESCRIPTOR_LEN], b: &[f32; DESCRIPTOR_LEN]) -> f32 {
    let mut acc = [0f32; 8];
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for k in 0..8 {
            let d = ca[k] - cb[k];
            acc[k] += d * d;
        }
    }
    acc.iter().sum()
}

/// Brute-force 2-NN search of every descriptor of `a` among those of `b`.
/// Ties keep the lower train index.
pub fn knn2(a: &KeypointSet, b: &KeypointSet) -> Vec<Candidate> {
    if b.is_empty() {
        return Vec::new();
    }
    a.descriptors
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let mut best = (f32::INFINITY, usize::MAX);
            let mut second = f32::INFINITY;
            for (ti, t) in b.descriptors.iter().enumerate() {
                let d = sq_dist(q, t);
                if d < best.0 {
                    second = best.0;
                    best = (d, ti);
                } else if d < second {
                    second = d;
                }
            }
            Candidate {
                query: qi,
                train: best.1,
                nearest_distance: best.0.sqrt(),
                second_distance: second.is_finite().then(|| second.sqrt()),
            }
        })
        .collect()
}

/// Keeps a candidate iff `nearest < ratio · second`. Candidates without a
/// second neighbour are dropped, since the test cannot be applied.
pub fn ratio_test(candidates: &[Candidate], ratio: f32) -> Vec<Match> {
    candidates
        .iter()
        .filter_map(|c| {
            let second = c.second_distance?;
            (c.nearest_distance < ratio * second).then_some(Match {
                query: c.query,
                train: c.train,
                nearest_distance: c.nearest_distance,
                second_distance: second,
            })
        })
        .collect()
}

pub fn match_features(a: &KeypointSet, b: &KeypointSet, ratio_threshold: f32) -> MatchSet {
    if a.is_empty() || b.is_empty() {
        return MatchSet {
            pairs: Vec::new(),
            empty_input: true,
        };
    }
    MatchSet {
        pairs: ratio_test(&knn2(a, b), ratio_threshold),
        empty_input: false,
    }
}
