//! Scale-invariant keypoints with 128-component gradient descriptors.
//!
//! A difference-of-Gaussians detector with sub-pixel refinement, dominant
//! orientation assignment and 4×4×8 orientation-histogram descriptors. The
//! defaults are the usual ones (σ = 1.6, three layers per octave, contrast
//! threshold 0.04, edge ratio 10, input doubled before the first octave).
//!
//! Angles are measured with `atan2(dy, dx)` in image coordinates, so with
//! y pointing down a positive angle turns clockwise on screen.

use std::f32::consts::TAU;

use hkcd_core::ImageBuffer;
use serde::{Deserialize, Serialize};

pub const DESCRIPTOR_LEN: usize = 128;

const IMG_BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;
const ORI_HIST_BINS: usize = 36;
const ORI_SIG_FACTOR: f32 = 1.5;
const ORI_RADIUS: f32 = 3.0 * ORI_SIG_FACTOR;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESCR_WIDTH: usize = 4;
const DESCR_HIST_BINS: usize = 8;
const DESCR_SCL_FACTOR: f32 = 3.0;
const DESCR_MAG_THR: f32 = 0.2;
/// Blur assumed to be present in the input image.
const INIT_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiftConfig {
    /// Scales sampled per octave.
    pub octave_layers: usize,
    /// Minimum |DoG| response, for images in `[0, 1]`.
    pub contrast_threshold: f64,
    /// Maximum ratio of principal curvatures.
    pub edge_threshold: f64,
    pub sigma: f64,
    /// Double the image before building the first octave.
    pub upsample: bool,
    /// Octave count; derived from the image size when absent.
    pub n_octaves: Option<usize>,
    /// Keep only the strongest responses when set.
    pub max_keypoints: Option<usize>,
}

impl Default for SiftConfig {
    fn default() -> Self {
        Self {
            octave_layers: 3,
            contrast_threshold: 0.04,
            edge_threshold: 10.0,
            sigma: 1.6,
            upsample: true,
            n_octaves: None,
            max_keypoints: None,
        }
    }
}

/// Keypoints in source-image pixel coordinates, stored as parallel lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeypointSet {
    pub locations: Vec<[f32; 2]>,
    pub scales: Vec<f32>,
    /// Radians in `[0, 2π)`.
    pub orientations: Vec<f32>,
    pub responses: Vec<f32>,
    pub descriptors: Vec<[f32; DESCRIPTOR_LEN]>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Parallel lists agree in length and every descriptor is finite.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        self.scales.len() == n
            && self.orientations.len() == n
            && self.responses.len() == n
            && self.descriptors.len() == n
            && self.descriptors.iter().all(|d| d.iter().all(|v| v.is_finite()))
    }

    fn push(&mut self, loc: [f32; 2], scale: f32, ori: f32, response: f32, desc: [f32; DESCRIPTOR_LEN]) {
        self.locations.push(loc);
        self.scales.push(scale);
        self.orientations.push(ori);
        self.responses.push(response);
        self.descriptors.push(desc);
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut out = KeypointSet::default();
        for &i in idx {
            out.push(
                self.locations[i],
                self.scales[i],
                self.orientations[i],
                self.responses[i],
                self.descriptors[i],
            );
        }
        out
    }
}

#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }

    #[inline]
    fn ati(&self, y: isize, x: isize) -> f32 {
        self.data[y as usize * self.w + x as usize]
    }
}

fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = ((sigma * 4.0).ceil() as usize).max(1);
    let k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| (v / s) as f32).collect()
}

fn blur(src: &Plane, sigma: f64) -> Plane {
    let k = gaussian_kernel(sigma);
    let r = k.len() / 2;
    let (h, w) = (src.h, src.w);
    let mut tmp = vec![0f32; h * w];
    let mut line = vec![0f32; w + 2 * r];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for (i, v) in line.iter_mut().enumerate() {
            *v = row[reflect101(i as isize - r as isize, w)];
        }
        for (x, out) in tmp[y * w..(y + 1) * w].iter_mut().enumerate() {
            *out = k.iter().zip(&line[x..x + k.len()]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0f32; h * w];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, kv) in k.iter().enumerate() {
            let sy = reflect101(y as isize + j as isize - r as isize, h);
            for (d, s) in dst.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *d += kv * s;
            }
        }
    }
    Plane { h, w, data: out }
}

/// Doubles the size with bilinear interpolation on half-pixel centres.
fn upsample2(src: &Plane) -> Plane {
    let (h, w) = (src.h * 2, src.w * 2);
    let coord = |i: usize, n: usize| {
        let f = ((i as f32 + 0.5) * 0.5 - 0.5).max(0.0);
        let i0 = (f.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, f - i0 as f32)
    };
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        let (y0, y1, fy) = coord(y, src.h);
        for x in 0..w {
            let (x0, x1, fx) = coord(x, src.w);
            let top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
            let bot = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
            data.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Plane { h, w, data }
}

fn downsample2(src: &Plane) -> Plane {
    let (h, w) = (src.h / 2, src.w / 2);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            data.push(src.at(2 * y, 2 * x));
        }
    }
    Plane { h, w, data }
}

fn subtract(a: &Plane, b: &Plane) -> Plane {
    Plane {
        h: a.h,
        w: a.w,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    }
}

struct Pyramids {
    gauss: Vec<Vec<Plane>>,
    dog: Vec<Vec<Plane>>,
}

fn build_pyramids(base: Plane, cfg: &SiftConfig) -> Pyramids {
    let s = cfg.octave_layers;
    let min_dim = base.h.min(base.w) as f64;
    let auto = ((min_dim.log2().round() as i64) - 2).max(1) as usize;
    let n_octaves = cfg.n_octaves.unwrap_or(auto).max(1);

    let k = 2f64.powf(1.0 / s as f64);
    let mut sig = vec![cfg.sigma; s + 3];
    for (i, v) in sig.iter_mut().enumerate().skip(1) {
        let prev = cfg.sigma * k.powi(i as i32 - 1);
        let total = prev * k;
        *v = (total * total - prev * prev).sqrt();
    }

    let mut gauss: Vec<Vec<Plane>> = Vec::with_capacity(n_octaves);
    let mut base = Some(base);
    for o in 0..n_octaves {
        let first = if o == 0 {
            base.take().expect("base used once")
        } else {
            let d = downsample2(&gauss[o - 1][s]);
            if d.h.min(d.w) < 2 * IMG_BORDER + 3 {
                break;
            }
            d
        };
        let mut oct = Vec::with_capacity(s + 3);
        oct.push(first);
        for i in 1..s + 3 {
            let next = blur(&oct[i - 1], sig[i]);
            oct.push(next);
        }
        gauss.push(oct);
    }
    let dog = gauss
        .iter()
        .map(|oct| oct.windows(2).map(|p| subtract(&p[1], &p[0])).collect())
        .collect();
    Pyramids { gauss, dog }
}

fn solve3(h: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(h);
    if !d.is_finite() || d.abs() < 1e-18 {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut m = h;
        for r in 0..3 {
            m[r][c] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

struct RawKeypoint {
    octave: usize,
    layer: usize,
    /// Integer position in the octave, used for sampling.
    r: isize,
    c: isize,
    /// Sub-pixel position in the octave.
    x: f64,
    y: f64,
    /// Scale relative to the octave grid.
    scale: f64,
    response: f64,
}

fn refine_extremum(
    dog: &[Plane],
    octave: usize,
    layer: usize,
    r: usize,
    c: usize,
    cfg: &SiftConfig,
) -> Option<RawKeypoint> {
    let s = cfg.octave_layers as isize;
    let (h, w) = (dog[0].h as isize, dog[0].w as isize);
    let border = IMG_BORDER as isize;
    let (mut layer, mut r, mut c) = (layer as isize, r as isize, c as isize);
    let mut offset = [0.0f64; 3];
    let mut grad = [0.0f64; 3];
    let mut hess = [[0.0f64; 3]; 3];
    let mut value = 0.0f64;
    let mut converged = false;
    for _ in 0..MAX_INTERP_STEPS {
        let img = &dog[layer as usize];
        let prv = &dog[layer as usize - 1];
        let nxt = &dog[layer as usize + 1];
        let at = |p: &Plane, dy: isize, dx: isize| p.ati(r + dy, c + dx) as f64;
        value = at(img, 0, 0);
        grad = [
            (at(img, 0, 1) - at(img, 0, -1)) * 0.5,
            (at(img, 1, 0) - at(img, -1, 0)) * 0.5,
            (at(nxt, 0, 0) - at(prv, 0, 0)) * 0.5,
        ];
        let dxx = at(img, 0, 1) + at(img, 0, -1) - 2.0 * value;
        let dyy = at(img, 1, 0) + at(img, -1, 0) - 2.0 * value;
        let dss = at(nxt, 0, 0) + at(prv, 0, 0) - 2.0 * value;
        let dxy = (at(img, 1, 1) - at(img, 1, -1) - at(img, -1, 1) + at(img, -1, -1)) * 0.25;
        let dxs = (at(nxt, 0, 1) - at(nxt, 0, -1) - at(prv, 0, 1) + at(prv, 0, -1)) * 0.25;
        let dys = (at(nxt, 1, 0) - at(nxt, -1, 0) - at(prv, 1, 0) + at(prv, -1, 0)) * 0.25;
        hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let x = solve3(hess, grad)?;
        offset = [-x[0], -x[1], -x[2]];
        if offset.iter().all(|v| v.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|v| v.abs() > 1e6) {
            return None;
        }
        c += offset[0].round() as isize;
        r += offset[1].round() as isize;
        layer += offset[2].round() as isize;
        if layer < 1 || layer > s || c < border || c >= w - border || r < border || r >= h - border {
            return None;
        }
    }
    if !converged {
        return None;
    }
    let contrast = value + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if contrast.abs() * (s as f64) < cfg.contrast_threshold {
        return None;
    }
    let (dxx, dyy, dxy) = (hess[0][0], hess[1][1], hess[0][1]);
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let e = cfg.edge_threshold;
    if det <= 0.0 || tr * tr * e >= (e + 1.0) * (e + 1.0) * det {
        return None;
    }
    Some(RawKeypoint {
        octave,
        layer: layer as usize,
        r,
        c,
        x: c as f64 + offset[0],
        y: r as f64 + offset[1],
        scale: cfg.sigma * 2f64.powf((layer as f64 + offset[2]) / s as f64),
        response: contrast.abs(),
    })
}

fn detect(pyr: &Pyramids, cfg: &SiftConfig) -> Vec<RawKeypoint> {
    let s = cfg.octave_layers;
    let threshold = (0.5 * cfg.contrast_threshold / s as f64) as f32;
    let mut out = Vec::new();
    for (o, dog) in pyr.dog.iter().enumerate() {
        let (h, w) = (dog[0].h, dog[0].w);
        if h <= 2 * IMG_BORDER || w <= 2 * IMG_BORDER {
            continue;
        }
        for layer in 1..=s {
            let (prv, cur, nxt) = (&dog[layer - 1], &dog[layer], &dog[layer + 1]);
            for r in IMG_BORDER..h - IMG_BORDER {
                for c in IMG_BORDER..w - IMG_BORDER {
                    let v = cur.at(r, c);
                    if v.abs() <= threshold {
                        continue;
                    }
                    let mut is_ext = true;
                    'scan: for p in [prv, cur, nxt] {
                        for yy in r - 1..=r + 1 {
                            for xx in c - 1..=c + 1 {
                                let n = p.at(yy, xx);
                                if (v > 0.0 && n > v) || (v < 0.0 && n < v) {
                                    is_ext = false;
                                    break 'scan;
                                }
                            }
                        }
                    }
                    if is_ext {
                        if let Some(kp) = refine_extremum(dog, o, layer, r, c, cfg) {
                            out.push(kp);
                        }
                    }
                }
            }
        }
    }
    out
}

#[inline]
fn gradient(img: &Plane, y: isize, x: isize) -> (f32, f32) {
    (
        img.ati(y, x + 1) - img.ati(y, x - 1),
        img.ati(y + 1, x) - img.ati(y - 1, x),
    )
}

/// Dominant gradient orientations around `(r, c)`.
fn orientations(img: &Plane, r: isize, c: isize, scale: f32) -> Vec<f32> {
    let n = ORI_HIST_BINS;
    let radius = (ORI_RADIUS * scale).round() as isize;
    let sigma = ORI_SIG_FACTOR * scale;
    let exp_scale = -1.0 / (2.0 * sigma * sigma);
    let (h, w) = (img.h as isize, img.w as isize);
    let mut raw = [0f32; ORI_HIST_BINS];
    for i in -radius..=radius {
        let y = r + i;
        if y <= 0 || y >= h - 1 {
            continue;
        }
        for j in -radius..=radius {
            let x = c + j;
            if x <= 0 || x >= w - 1 {
                continue;
            }
            let (dx, dy) = gradient(img, y, x);
            let weight = (((i * i + j * j) as f32) * exp_scale).exp();
            let angle = dy.atan2(dx);
            let bin = ((angle * n as f32 / TAU).round() as isize).rem_euclid(n as isize) as usize;
            raw[bin] += weight * (dx * dx + dy * dy).sqrt();
        }
    }
    let at = |i: isize| raw[i.rem_euclid(n as isize) as usize];
    let mut hist = [0f32; ORI_HIST_BINS];
    for (i, v) in hist.iter_mut().enumerate() {
        let i = i as isize;
        *v = (at(i - 2) + at(i + 2)) * (1.0 / 16.0) + (at(i - 1) + at(i + 1)) * (4.0 / 16.0) + at(i) * (6.0 / 16.0);
    }
    let max = hist.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let l = hist[(i + n - 1) % n];
        let rr = hist[(i + 1) % n];
        let v = hist[i];
        if v > l && v > rr && v >= ORI_PEAK_RATIO * max {
            let mut bin = i as f32 + 0.5 * (l - rr) / (l - 2.0 * v + rr);
            if bin < 0.0 {
                bin += n as f32;
            } else if bin >= n as f32 {
                bin -= n as f32;
            }
            out.push((bin * TAU / n as f32).rem_euclid(TAU));
        }
    }
    out
}

fn descriptor(img: &Plane, x: f64, y: f64, ori: f32, scale: f32) -> [f32; DESCRIPTOR_LEN] {
    let d = DESCR_WIDTH;
    let n = DESCR_HIST_BINS;
    let (h, w) = (img.h as isize, img.w as isize);
    let (px, py) = (x.round() as isize, y.round() as isize);
    let hist_width = DESCR_SCL_FACTOR * scale;
    let max_radius = ((img.w * img.w + img.h * img.h) as f32).sqrt();
    let radius = (hist_width * std::f32::consts::SQRT_2 * (d as f32 + 1.0) * 0.5)
        .round()
        .min(max_radius) as isize;
    let cos_t = ori.cos() / hist_width;
    let sin_t = ori.sin() / hist_width;
    let bins_per_rad = n as f32 / TAU;
    let exp_scale = -1.0 / (d as f32 * d as f32 * 0.5);
    let half = d as f32 / 2.0 - 0.5;
    let stride_c = n + 2;
    let stride_r = (d + 2) * stride_c;
    let mut hist = vec![0f32; (d + 2) * stride_r];

    for i in -radius..=radius {
        for j in -radius..=radius {
            let (jf, if_) = (j as f32, i as f32);
            let c_rot = jf * cos_t + if_ * sin_t;
            let r_rot = -jf * sin_t + if_ * cos_t;
            let rbin = r_rot + half;
            let cbin = c_rot + half;
            let (yy, xx) = (py + i, px + j);
            if !(rbin > -1.0 && rbin < d as f32 && cbin > -1.0 && cbin < d as f32) {
                continue;
            }
            if yy <= 0 || yy >= h - 1 || xx <= 0 || xx >= w - 1 {
                continue;
            }
            let (dx, dy) = gradient(img, yy, xx);
            let mag = (dx * dx + dy * dy).sqrt() * ((c_rot * c_rot + r_rot * r_rot) * exp_scale).exp();
            let obin = (dy.atan2(dx) - ori).rem_euclid(TAU) * bins_per_rad;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (rb, cb, ob) = (rbin - r0, cbin - c0, obin - o0);
            let o0 = (o0 as isize).rem_euclid(n as isize) as usize;
            let v_r1 = mag * rb;
            let v_r0 = mag - v_r1;
            let v_rc11 = v_r1 * cb;
            let v_rc10 = v_r1 - v_rc11;
            let v_rc01 = v_r0 * cb;
            let v_rc00 = v_r0 - v_rc01;
            let idx = (r0 as isize + 1) as usize * stride_r + (c0 as isize + 1) as usize * stride_c + o0;
            for (off, v) in [
                (0, v_rc00),
                (stride_c, v_rc01),
                (stride_r, v_rc10),
                (stride_r + stride_c, v_rc11),
            ] {
                let v1 = v * ob;
                hist[idx + off] += v - v1;
                hist[idx + off + 1] += v1;
            }
        }
    }

    let mut out = [0f32; DESCRIPTOR_LEN];
    for i in 0..d {
        for j in 0..d {
            let idx = (i + 1) * stride_r + (j + 1) * stride_c;
            hist[idx] += hist[idx + n];
            hist[idx + 1] += hist[idx + n + 1];
            for k in 0..n {
                out[(i * d + j) * n + k] = hist[idx + k];
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f32>().sqrt();
    let thr = norm * DESCR_MAG_THR;
    for v in out.iter_mut() {
        *v = v.min(thr);
    }
    let norm = out.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > f32::EPSILON {
        for v in out.iter_mut() {
            *v /= norm;
        }
    }
    out
}

/// Keypoints and descriptors with the default configuration.
pub fn extract_local_features(image: &ImageBuffer) -> KeypointSet {
    extract_with(image, &SiftConfig::default())
}

pub fn extract_with(image: &ImageBuffer, cfg: &SiftConfig) -> KeypointSet {
    let (h, w) = image.dims();
    extract_gray(&image.to_gray_f32(), h, w, cfg)
}

/// Runs the detector on a row-major gray image with values in `[0, 1]`.
pub fn extract_gray(gray: &[f32], h: usize, w: usize, cfg: &SiftConfig) -> KeypointSet {
    assert_eq!(gray.len(), h * w, "gray buffer size");
    let plane = Plane {
        h,
        w,
        data: gray.to_vec(),
    };
    let (plane, prior) = if cfg.upsample {
        (upsample2(&plane), 2.0 * INIT_SIGMA)
    } else {
        (plane, INIT_SIGMA)
    };
    let sig_diff = (cfg.sigma * cfg.sigma - prior * prior).max(0.01).sqrt();
    let base = blur(&plane, sig_diff);
    let pyr = build_pyramids(base, cfg);
    let raw = detect(&pyr, cfg);

    let mut set = KeypointSet::default();
    for kp in &raw {
        let img = &pyr.gauss[kp.octave][kp.layer];
        let scale = kp.scale as f32;
        let octave_scale = 2f64.powi(kp.octave as i32);
        // octave grid -> base grid -> source grid
        let (bx, by) = (kp.x * octave_scale, kp.y * octave_scale);
        let (sx, sy, sscale) = if cfg.upsample {
            (bx * 0.5 - 0.25, by * 0.5 - 0.25, kp.scale * octave_scale * 0.5)
        } else {
            (bx, by, kp.scale * octave_scale)
        };
        for ori in orientations(img, kp.r, kp.c, scale) {
            let desc = descriptor(img, kp.x, kp.y, ori, scale);
            set.push([sx as f32, sy as f32], sscale as f32, ori, kp.response as f32, desc);
        }
    }
    match cfg.max_keypoints {
        Some(limit) if set.len() > limit => {
            let mut idx: Vec<usize> = (0..set.len()).collect();
            idx.sort_by(|&a, &b| set.responses[b].total_cmp(&set.responses[a]));
            idx.truncate(limit);
            idx.sort_unstable();
            set.select(&idx)
        }
        _ => set,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.6);
        assert_eq!(k.len(), 2 * 7 + 1);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        for i in 0..k.len() / 2 {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn reflect_border() {
        assert_eq!(reflect101(-1, 5), 1);
        assert_eq!(reflect101(-2, 5), 2);
        assert_eq!(reflect101(5, 5), 3);
        assert_eq!(reflect101(6, 5), 2);
        assert_eq!(reflect101(0, 1), 0);
    }

    #[test]
    fn blur_preserves_constant() {
        let p = Plane {
            h: 9,
            w: 7,
            data: vec![0.4; 63],
        };
        let b = blur(&p, 2.0);
        assert!(b.data.iter().all(|v| (v - 0.4).abs() < 1e-6));
    }

    #[test]
    fn solve3_matches_known_system() {
        let x = solve3([[2.0, 0.0, 0.0], [0.0, 4.0, 1.0], [0.0, 1.0, 3.0]], [2.0, 5.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
        assert!((x[2] - 1.0).abs() < 1e-12);
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }

    #[test]
    fn single_blob_is_found_at_its_centre() {
        let (h, w) = (96, 96);
        let (cx, cy, s) = (47.0f32, 41.0f32, 4.0f32);
        let gray: Vec<f32> = (0..h * w)
            .map(|i| {
                let (y, x) = ((i / w) as f32, (i % w) as f32);
                0.2 + 0.6 * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
            })
            .collect();
        let set = extract_gray(&gray, h, w, &SiftConfig::default());
        assert!(set.is_consistent());
        let best = (0..set.len())
            .max_by(|&a, &b| set.responses[a].total_cmp(&set.responses[b]))
            .expect("a keypoint on the blob");
        let [x, y] = set.locations[best];
        assert!((x - cx).abs() < 0.5 && (y - cy).abs() < 0.5, "{x} {y}");
        // the normalized Laplacian of a Gaussian blob of std s peaks at σ = s
        let ratio = set.scales[best] / s;
        assert!(ratio > 0.75 && ratio < 1.3, "scale {}", set.scales[best]);
    }

    #[test]
    fn descriptors_are_unit_or_zero() {
        let img = hkcd_core::synthetic::TexturedScene::new(3, 128.0).render_identity(128, 128);
        let set = extract_local_features(&img);
        assert!(set.len() > 20);
        for d in &set.descriptors {
            let n = d.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((n - 1.0).abs() < 1e-4 || n == 0.0);
            assert!(d.iter().all(|v| *v >= 0.0 && *v <= DESCR_MAG_THR + 0.3));
        }
        for o in &set.orientations {
            assert!((0.0..TAU).contains(o));
        }
    }

    #[test]
    fn max_keypoints_keeps_strongest() {
        let img = hkcd_core::synthetic::TexturedScene::new(4, 128.0).render_identity(128, 128);
        let all = extract_local_features(&img);
        let cfg = SiftConfig {
            max_keypoints: Some(10),
            ..SiftConfig::default()
        };
        let top = extract_with(&img, &cfg);
        assert_eq!(top.len(), 10);
        let mut r = all.responses.clone();
        r.sort_by(|a, b| b.total_cmp(a));
        let min_kept = top.responses.iter().cloned().fold(f32::INFINITY, f32::min);
        assert!(min_kept >= r[9]);
    }
}
