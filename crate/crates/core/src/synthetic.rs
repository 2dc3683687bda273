//! Procedural scenes and fixture pairs with known ground truth.
//!
//! [`TexturedScene`] is a continuous colour field built from random oriented
//! rectangles, ellipses and soft blobs over a smooth background. Rendering
//! it through a coordinate map gives exact synthetic camera views, so a pair
//! related by a known rigid motion can be produced without resampling an
//! existing raster.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{round_u8, BinaryMask, ImageBuffer};
use crate::pair::{HazardType, HousekeepingPair, PairMeta, SceneTag};

#[derive(Debug, Clone)]
enum Shape {
    Rect {
        cx: f64,
        cy: f64,
        half_w: f64,
        half_h: f64,
        cos: f64,
        sin: f64,
    },
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        cos: f64,
        sin: f64,
    },
    Blob {
        cx: f64,
        cy: f64,
        sigma: f64,
    },
}

#[derive(Debug, Clone)]
struct Primitive {
    shape: Shape,
    color: [f64; 3],
    alpha: f64,
    radius: f64,
}

impl Primitive {
    fn center(&self) -> (f64, f64) {
        match self.shape {
            Shape::Rect { cx, cy, .. } | Shape::Ellipse { cx, cy, .. } | Shape::Blob { cx, cy, .. } => (cx, cy),
        }
    }

    /// Coverage in `[0, 1]` at scene point `(x, y)`.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        let dx = x - cx;
        let dy = y - cy;
        if dx.abs() > self.radius || dy.abs() > self.radius {
            return 0.0;
        }
        match self.shape {
            Shape::Rect {
                half_w,
                half_h,
                cos,
                sin,
                ..
            } => {
                let u = cos * dx + sin * dy;
                let v = -sin * dx + cos * dy;
                f64::from(u.abs() <= half_w && v.abs() <= half_h)
            }
            Shape::Ellipse { rx, ry, cos, sin, .. } => {
                let u = (cos * dx + sin * dy) / rx;
                let v = (-sin * dx + cos * dy) / ry;
                f64::from(u * u + v * v <= 1.0)
            }
            Shape::Blob { sigma, .. } => (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp(),
        }
    }
}

/// A random, scale-rich colour field defined over the whole plane.
#[derive(Debug, Clone)]
pub struct TexturedScene {
    primitives: Vec<Primitive>,
    /// Primitive indices bucketed on a coarse grid for fast lookup.
    grid: Vec<Vec<usize>>,
    cell: f64,
    origin: (f64, f64),
    cols: usize,
    rows: usize,
    background: [[f64; 3]; 2],
    wave: [(f64, f64, f64); 3],
}

impl TexturedScene {
    /// Scene covering at least `[-margin, extent + margin]²` with primitives.
    pub fn new(seed: u64, extent: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let margin = extent * 0.5;
        let lo = -margin;
        let hi = extent + margin;
        let span = hi - lo;
        let count = ((span * span) / 900.0).round().max(40.0) as usize;
        let mut primitives = Vec::with_capacity(count);
        for i in 0..count {
            let cx = rng.random_range(lo..hi);
            let cy = rng.random_range(lo..hi);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let color = [
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
            ];
            let size = extent / 512.0 * 2f64.powf(rng.random_range(1.5..5.0));
            let (shape, radius) = match i % 3 {
                0 => {
                    let half_w = size;
                    let half_h = size * rng.random_range(0.3..1.0);
                    (
                        Shape::Rect {
                            cx,
                            cy,
                            half_w,
                            half_h,
                            cos: theta.cos(),
                            sin: theta.sin(),
                        },
                        (half_w * half_w + half_h * half_h).sqrt(),
                    )
                }
                1 => {
                    let rx = size;
                    let ry = size * rng.random_range(0.4..1.0);
                    (
                        Shape::Ellipse {
                            cx,
                            cy,
                            rx,
                            ry,
                            cos: theta.cos(),
                            sin: theta.sin(),
                        },
                        rx.max(ry),
                    )
                }
                _ => {
                    let sigma = size * 0.6;
                    (Shape::Blob { cx, cy, sigma }, 3.0 * sigma)
                }
            };
            primitives.push(Primitive {
                shape,
                color,
                alpha: rng.random_range(0.6..1.0),
                radius,
            });
        }
        let cell = 64.0 * extent / 512.0;
        let cols = (span / cell).ceil() as usize + 1;
        let rows = cols;
        let mut grid = vec![Vec::new(); cols * rows];
        for (idx, p) in primitives.iter().enumerate() {
            let (cx, cy) = p.center();
            let x0 = (((cx - p.radius - lo) / cell).floor().max(0.0)) as usize;
            let x1 = ((((cx + p.radius - lo) / cell).floor()) as usize).min(cols - 1);
            let y0 = (((cy - p.radius - lo) / cell).floor().max(0.0)) as usize;
            let y1 = ((((cy + p.radius - lo) / cell).floor()) as usize).min(rows - 1);
            for gy in y0..=y1 {
                for gx in x0..=x1 {
                    grid[gy * cols + gx].push(idx);
                }
            }
        }
        let background = [
            [rng.random_range(40.0..200.0), rng.random_range(40.0..200.0), rng.random_range(40.0..200.0)],
            [rng.random_range(40.0..200.0), rng.random_range(40.0..200.0), rng.random_range(40.0..200.0)],
        ];
        let wave = [0, 1, 2].map(|_| {
            (
                rng.random_range(0.01..0.05) * 512.0 / extent,
                rng.random_range(0.01..0.05) * 512.0 / extent,
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        });
        Self {
            primitives,
            grid,
            cell,
            origin: (lo, lo),
            cols,
            rows,
            background,
            wave,
        }
    }

    /// Colour at scene point `(x, y)`.
    pub fn color(&self, x: f64, y: f64) -> [f64; 3] {
        let t = 0.5 + 0.5 * (self.wave[0].0 * x + self.wave[0].1 * y + self.wave[0].2).sin();
        let mut c = [0.0; 3];
        for (k, v) in c.iter_mut().enumerate() {
            *v = self.background[0][k] * t + self.background[1][k] * (1.0 - t)
                + 12.0 * (self.wave[k].0 * 3.0 * x - self.wave[k].1 * 2.0 * y + self.wave[k].2).sin();
        }
        let gx = ((x - self.origin.0) / self.cell).floor();
        let gy = ((y - self.origin.1) / self.cell).floor();
        if gx >= 0.0 && gy >= 0.0 && (gx as usize) < self.cols && (gy as usize) < self.rows {
            for &i in &self.grid[gy as usize * self.cols + gx as usize] {
                let p = &self.primitives[i];
                let a = p.alpha * p.coverage(x, y);
                if a > 0.0 {
                    for k in 0..3 {
                        c[k] = c[k] * (1.0 - a) + p.color[k] * a;
                    }
                }
            }
        }
        c
    }

    /// Renders an `h × w` view where pixel `(x, y)` shows scene point
    /// `map(x, y)`, with 2×2 supersampling.
    pub fn render(&self, h: usize, w: usize, map: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
        const OFFSETS: [f64; 2] = [-0.25, 0.25];
        ImageBuffer::from_fn(h, w, |y, x| {
            let mut acc = [0.0; 3];
            for oy in OFFSETS {
                for ox in OFFSETS {
                    let (sx, sy) = map(x as f64 + ox, y as f64 + oy);
                    let c = self.color(sx, sy);
                    for k in 0..3 {
                        acc[k] += c[k] / 4.0;
                    }
                }
            }
            acc.map(round_u8)
        })
        .expect("non-empty render")
    }

    pub fn render_identity(&self, h: usize, w: usize) -> ImageBuffer {
        self.render(h, w, |x, y| (x, y))
    }
}

/// Uniform RGB noise.
pub fn noise_image(h: usize, w: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.random::<u8>()).collect();
    ImageBuffer::new(h, w, data).expect("non-empty")
}

/// Fixture pair whose change is a few saturated rectangles painted onto the
/// poor image. The good image is the unmodified background. Rectangle edges
/// are aligned to a 4-pixel grid.
pub fn rectangles_pair(id: &str, size: usize, seed: u64) -> HousekeepingPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = TexturedScene::new(seed.wrapping_mul(31).wrapping_add(7), size as f64 * 4.0);
    // a low-contrast background: the scene viewed from far away, washed out
    let background = scene.render(size, size, |x, y| (x * 2.0, y * 2.0));
    let background = ImageBuffer::from_fn(size, size, |y, x| {
        background.pixel(y, x).map(|v| round_u8(100.0 + (v as f64 - 128.0) * 0.35))
    })
    .expect("non-empty");
    const PALETTE: [[u8; 3]; 3] = [[230, 40, 30], [250, 200, 20], [30, 80, 240]];
    let cells = size / 4;
    let mut mask = BinaryMask::zeros(size, size).expect("non-empty");
    let mut poor = background.clone();
    let n_rects = rng.random_range(1..=3);
    for _ in 0..n_rects {
        let rh = rng.random_range(cells / 6..=cells / 3).max(2);
        let rw = rng.random_range(cells / 6..=cells / 3).max(2);
        let top = rng.random_range(0..cells - rh) * 4;
        let left = rng.random_range(0..cells - rw) * 4;
        let color = PALETTE[rng.random_range(0..PALETTE.len())];
        for y in top..top + rh * 4 {
            for x in left..left + rw * 4 {
                poor.set_pixel(y, x, color);
                mask.set(y, x, true);
            }
        }
    }
    HousekeepingPair::new(
        id,
        poor,
        background,
        mask,
        PairMeta {
            type_tag: HazardType::Debris,
            scene_tag: SceneTag::Outdoor,
        },
    )
    .expect("matching dims")
}
