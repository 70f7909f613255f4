//! Seeded synthetic hand-gesture data: a skin-coloured palm, wrist and
//! class-dependent finger prongs over a textured non-skin background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, Sample, SplitRole, IMAGE_SIZE};
use crate::error::{config_err, Result};
use crate::tensor::{Shape, Tensor};

/// Classes 0–4 raise 1–5 fingers; classes 5–9 add a thumb to the same.
pub const MAX_SYNTH_CLASSES: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    /// Samples in train, validation and test.
    pub per_split: [usize; 3],
    pub classes: usize,
    pub seed: u64,
    pub size: usize,
}

impl SynthConfig {
    pub fn new(per_split: [usize; 3], classes: usize, seed: u64) -> Self {
        SynthConfig {
            per_split,
            classes,
            seed,
            size: IMAGE_SIZE,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Capsule {
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    r: f64,
}

impl Capsule {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (self.bx - self.ax, self.by - self.ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((x - self.ax) * dx + (y - self.ay) * dy) / len2).clamp(0.0, 1.0)
        };
        let (px, py) = (self.ax + t * dx - x, self.ay + t * dy - y);
        px * px + py * py <= self.r * self.r
    }
}

/// Exact hand silhouette in pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HandGeometry {
    pub cx: f64,
    pub cy: f64,
    /// Rotation in radians, positive clockwise on screen.
    pub angle: f64,
    pub palm_rx: f64,
    pub palm_ry: f64,
    capsules: Vec<Capsule>,
}

impl HandGeometry {
    /// Hand of class `class` with the given placement; sizes relative to `side`.
    pub fn new(class: usize, side: usize, cx: f64, cy: f64, scale: f64, angle: f64) -> Self {
        let s = side as f64 * scale;
        let (palm_rx, palm_ry) = (0.12 * s, 0.14 * s);
        let fingers = class % 5 + 1;
        let thumb = class >= 5;
        let (sin, cos) = angle.sin_cos();
        // Local frame: +y points from the palm towards the fingertips (screen up).
        let to_screen = |lx: f64, ly: f64| (cx + lx * cos + ly * sin, cy + lx * sin - ly * cos);
        let capsule = |from: (f64, f64), to: (f64, f64), r: f64| {
            let (ax, ay) = to_screen(from.0, from.1);
            let (bx, by) = to_screen(to.0, to.1);
            Capsule { ax, ay, bx, by, r }
        };
        let mut capsules = Vec::new();
        let (finger_len, finger_r) = (0.17 * s, 0.028 * s);
        let spread = 0.14 * (fingers - 1) as f64;
        for i in 0..fingers {
            let a = if fingers == 1 {
                0.0
            } else {
                -spread + 2.0 * spread * i as f64 / (fingers - 1) as f64
            };
            let (dx, dy) = (a.sin(), a.cos());
            let base = (dx * 0.5 * palm_rx, dy * 0.6 * palm_ry);
            let tip = (dx * (palm_ry + finger_len), dy * (palm_ry + finger_len));
            capsules.push(capsule(base, tip, finger_r));
        }
        if thumb {
            let a: f64 = -1.75;
            let (dx, dy) = (a.sin(), a.cos());
            let len = palm_rx + 0.11 * s;
            capsules.push(capsule((0.0, 0.0), (dx * len, dy * len), 0.032 * s));
        }
        // Wrist, identical for every class.
        capsules.push(capsule((0.0, -0.5 * palm_ry), (0.0, -palm_ry - 0.22 * s), 0.075 * s));
        HandGeometry {
            cx,
            cy,
            angle,
            palm_rx,
            palm_ry,
            capsules,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (lx, ly) = (dx * cos + dy * sin, dx * sin - dy * cos);
        let e = (lx / self.palm_rx).powi(2) + (ly / self.palm_ry).powi(2);
        e <= 1.0 || self.capsules.iter().any(|c| c.contains(x, y))
    }

    /// Mask sampled at pixel centres.
    pub fn rasterize(&self, side: usize) -> Tensor<f32> {
        Tensor::from_fn(Shape::new(1, side, side, 1), |i| {
            let (y, x) = (i / side, i % side);
            self.contains(x as f64 + 0.5, y as f64 + 0.5) as u8 as f32
        })
    }
}

const BACKGROUNDS: [[f32; 3]; 6] = [
    [0.20, 0.32, 0.58],
    [0.22, 0.48, 0.30],
    [0.45, 0.46, 0.52],
    [0.14, 0.15, 0.20],
    [0.40, 0.30, 0.55],
    [0.12, 0.40, 0.45],
];

fn render(geometry: &HandGeometry, side: usize, rng: &mut ChaCha8Rng) -> (Tensor<f32>, Tensor<f32>) {
    let mask = geometry.rasterize(side);
    let bg = BACKGROUNDS[rng.random_range(0..BACKGROUNDS.len())];
    let bg: Vec<f32> = bg.iter().map(|v| v * rng.random_range(0.85..1.15)).collect();
    let (fx, fy, phase) = (
        rng.random_range(2.0..9.0f32),
        rng.random_range(2.0..9.0f32),
        rng.random_range(0.0..std::f32::consts::TAU),
    );
    let mut blobs = Vec::new();
    for _ in 0..rng.random_range(2..6) {
        let c = BACKGROUNDS[rng.random_range(0..BACKGROUNDS.len())];
        blobs.push((
            rng.random_range(0.0..side as f32),
            rng.random_range(0.0..side as f32),
            rng.random_range(0.05..0.2) * side as f32,
            c,
        ));
    }
    let brightness = rng.random_range(0.8..1.1f32);
    let skin = [
        0.86 * brightness + rng.random_range(-0.04..0.04),
        0.62 * brightness + rng.random_range(-0.05..0.05),
        0.50 * brightness + rng.random_range(-0.05..0.05),
    ];
    let shade_dir = rng.random_range(0.0..std::f32::consts::TAU);
    let mut image = Tensor::zeros(Shape::new(1, side, side, 3));
    let img = image.data_mut();
    let m = mask.data();
    let inv = 1.0 / side as f32;
    for y in 0..side {
        for x in 0..side {
            let p = y * side + x;
            let (u, v) = (x as f32 * inv, y as f32 * inv);
            let px = &mut img[3 * p..3 * p + 3];
            if m[p] > 0.0 {
                let shade = 1.0 + 0.06 * ((u - 0.5) * shade_dir.cos() + (v - 0.5) * shade_dir.sin());
                for c in 0..3 {
                    px[c] = skin[c] * shade + rng.random_range(-0.02..0.02);
                }
            } else {
                let mut col = [bg[0], bg[1], bg[2]];
                for &(bx, by, br, bc) in &blobs {
                    if (x as f32 - bx).powi(2) + (y as f32 - by).powi(2) < br * br {
                        col = bc;
                    }
                }
                let wave = 0.07 * (fx * u * std::f32::consts::TAU + phase).sin() * (fy * v * std::f32::consts::TAU).cos();
                for c in 0..3 {
                    px[c] = col[c] + wave + rng.random_range(-0.03..0.03);
                }
            }
            for c in px.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
    }
    (image, mask)
}

/// Geometry of sample `index` of a split; placement jitter is bounded so the
/// class is always recognisable from the silhouette.
fn sample_geometry(class: usize, side: usize, rng: &mut ChaCha8Rng) -> HandGeometry {
    let s = side as f64;
    let cx = s * (0.5 + rng.random_range(-0.05..0.05));
    let cy = s * (0.47 + rng.random_range(-0.04..0.04));
    let scale = rng.random_range(0.92..1.08);
    let angle = rng.random_range(-12f64..12.0).to_radians();
    HandGeometry::new(class, side, cx, cy, scale, angle)
}

fn split_rng(seed: u64, split: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((split as u64) << 40) | index as u64);
    rng
}

/// Generates train, validation and test splits. Labels cycle through the classes
/// so every split is balanced; each sample draws from its own generator stream.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<[DatasetSplit; 3]> {
    if cfg.classes < 2 || cfg.classes > MAX_SYNTH_CLASSES {
        return Err(config_err!(
            "synthetic data supports 2..={MAX_SYNTH_CLASSES} classes, got {}",
            cfg.classes
        ));
    }
    if cfg.size < 32 {
        return Err(config_err!("synthetic image side {} is too small", cfg.size));
    }
    let make = |k: usize| {
        let role = SplitRole::ALL[k];
        let samples = (0..cfg.per_split[k])
            .map(|i| {
                let class = i % cfg.classes;
                let mut rng = split_rng(cfg.seed, k, i);
                let geometry = sample_geometry(class, cfg.size, &mut rng);
                let (image, mask) = render(&geometry, cfg.size, &mut rng);
                Sample {
                    id: format!("{}_{i:05}", role.dir()),
                    image,
                    mask: Some(mask),
                    label: Some(class),
                }
            })
            .collect();
        DatasetSplit {
            role,
            classes: cfg.classes,
            samples,
            provenance: format!("synthetic seed={} classes={}", cfg.seed, cfg.classes),
        }
    };
    Ok([make(0), make(1), make(2)])
}

/// Placement used for sample `index` of split `split`, recomputed from the seed.
#[cfg(test)]
fn regenerate_geometry(cfg: &SynthConfig, split: usize, index: usize) -> HandGeometry {
    let mut rng = split_rng(cfg.seed, split, index);
    sample_geometry(index % cfg.classes, cfg.size, &mut rng)
}
