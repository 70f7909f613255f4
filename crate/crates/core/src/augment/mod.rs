//! Geometric augmentation: sampled affine transforms applied identically to an
//! image and its mask, and offline dataset expansion.

mod transform;

pub use transform::{apply_transform, AffineTransform, Fill, Interp, TransformParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{DatasetSplit, Sample, SplitRole};
use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugmentMode {
    Offline,
    OnlineStream,
    OnlineFusion,
}

/// How zoom factors are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZoomRange {
    /// Uniform in `[1 − limit, 1 + limit]`.
    Symmetric(f64),
    /// Uniform in `[1 − hi, 1 − lo] ∪ [1 + lo, 1 + hi]`.
    Banded { lo: f64, hi: f64 },
}

/// How translations (fractions of the side) are drawn, per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftRange {
    Symmetric(f64),
    Banded { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentProfile {
    pub mode: AugmentMode,
    pub rotation_deg: f64,
    /// Maximum x-shear factor.
    pub shear: f64,
    pub zoom: ZoomRange,
    pub shift: ShiftRange,
}

impl AugmentProfile {
    /// ±36°, shear 0.20, zoom ±10%, shift ±2%.
    pub const fn online_stream() -> Self {
        AugmentProfile {
            mode: AugmentMode::OnlineStream,
            rotation_deg: 36.0,
            shear: 0.20,
            zoom: ZoomRange::Symmetric(0.10),
            shift: ShiftRange::Symmetric(0.02),
        }
    }

    /// ±41°, shear 0.25, zoom ±15%, shift ±15%.
    pub const fn online_fusion() -> Self {
        AugmentProfile {
            mode: AugmentMode::OnlineFusion,
            rotation_deg: 41.0,
            shear: 0.25,
            zoom: ZoomRange::Symmetric(0.15),
            shift: ShiftRange::Symmetric(0.15),
        }
    }

    /// Zoom and shift magnitudes of 15–20%, no rotation or shear.
    pub const fn offline() -> Self {
        AugmentProfile {
            mode: AugmentMode::Offline,
            rotation_deg: 0.0,
            shear: 0.0,
            zoom: ZoomRange::Banded { lo: 0.15, hi: 0.20 },
            shift: ShiftRange::Banded { lo: 0.15, hi: 0.20 },
        }
    }

    /// Online profile with every limit zero.
    pub const fn none() -> Self {
        AugmentProfile {
            mode: AugmentMode::OnlineStream,
            rotation_deg: 0.0,
            shear: 0.0,
            zoom: ZoomRange::Symmetric(0.0),
            shift: ShiftRange::Symmetric(0.0),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "online-stream" => Ok(Self::online_stream()),
            "online-fusion" => Ok(Self::online_fusion()),
            "offline" => Ok(Self::offline()),
            "none" => Ok(Self::none()),
            other => Err(config_err!(
                "unknown augmentation profile `{other}` (expected online-stream, online-fusion, offline or none)"
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.mode {
            _ if *self == Self::none() => "none",
            AugmentMode::Offline => "offline",
            AugmentMode::OnlineStream => "online-stream",
            AugmentMode::OnlineFusion => "online-fusion",
        }
    }

    /// Whether `p` lies within this profile's limits.
    pub fn admits(&self, p: &TransformParams) -> bool {
        let tol = 1e-12;
        let zoom_ok = match self.zoom {
            ZoomRange::Symmetric(l) => (p.zoom - 1.0).abs() <= l + tol,
            ZoomRange::Banded { lo, hi } => {
                let d = (p.zoom - 1.0).abs();
                d == 0.0 || (d >= lo - tol && d <= hi + tol)
            }
        };
        let shift_ok = |s: f64| match self.shift {
            ShiftRange::Symmetric(l) => s.abs() <= l + tol,
            ShiftRange::Banded { lo, hi } => s == 0.0 || (s.abs() >= lo - tol && s.abs() <= hi + tol),
        };
        p.rotation_deg.abs() <= self.rotation_deg + tol
            && p.shear.abs() <= self.shear + tol
            && zoom_ok
            && shift_ok(p.shift_x)
            && shift_ok(p.shift_y)
    }
}

fn symmetric(rng: &mut impl Rng, limit: f64) -> f64 {
    if limit == 0.0 {
        0.0
    } else {
        rng.random_range(-limit..=limit)
    }
}

fn banded(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..=hi);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

/// Draws transform parameters. Online profiles draw every component uniformly
/// within its limit. The offline profile switches zoom, horizontal and vertical
/// shift on independently, with at least one of them on.
pub fn sample_params(profile: &AugmentProfile, rng: &mut impl Rng) -> TransformParams {
    let rotation_deg = symmetric(rng, profile.rotation_deg);
    let shear = symmetric(rng, profile.shear);
    let (mut zoom_on, mut sx_on, mut sy_on) = (true, true, true);
    if profile.mode == AugmentMode::Offline {
        loop {
            zoom_on = rng.random::<bool>();
            sx_on = rng.random::<bool>();
            sy_on = rng.random::<bool>();
            if zoom_on || sx_on || sy_on {
                break;
            }
        }
    }
    let zoom = match (zoom_on, profile.zoom) {
        (false, _) => 1.0,
        (true, ZoomRange::Symmetric(l)) => 1.0 + symmetric(rng, l),
        (true, ZoomRange::Banded { lo, hi }) => 1.0 + banded(rng, lo, hi),
    };
    let mut shift = |on: bool| match (on, profile.shift) {
        (false, _) => 0.0,
        (true, ShiftRange::Symmetric(l)) => symmetric(rng, l),
        (true, ShiftRange::Banded { lo, hi }) => banded(rng, lo, hi),
    };
    let shift_x = shift(sx_on);
    let shift_y = shift(sy_on);
    TransformParams {
        rotation_deg,
        shear,
        zoom,
        shift_x,
        shift_y,
    }
}

/// Samples a transform for an image of `height × width`.
pub fn sample_transform(profile: &AugmentProfile, height: usize, width: usize, rng: &mut impl Rng) -> AffineTransform {
    AffineTransform::from_params(sample_params(profile, rng), height, width)
}

/// One sampled transform applied to the image (bilinear, edge replicate) and,
/// if present, the mask (nearest, fill 0).
pub fn augment_pair(
    image: &Tensor<f32>,
    mask: Option<&Tensor<f32>>,
    profile: &AugmentProfile,
    rng: &mut impl Rng,
) -> Result<(Tensor<f32>, Option<Tensor<f32>>)> {
    let s = image.shape();
    if let Some(m) = mask {
        let ms = m.shape();
        if ms.n != s.n || ms.h != s.h || ms.w != s.w {
            return Err(shape_err!("image {s} and mask {ms} differ in size"));
        }
    }
    let t = sample_transform(profile, s.h, s.w, rng);
    let out = apply_transform(image, &t, Interp::Bilinear, Fill::Edge);
    let mask = mask.map(|m| apply_transform(m, &t, Interp::Nearest, Fill::Value(0.0)));
    Ok((out, mask))
}

/// Copies added per original by [`expand_offline`].
pub const OFFLINE_COPIES: usize = 3;

/// Originals followed by three augmented copies each (stems suffixed
/// `_aug1`–`_aug3`). Only training splits may be expanded.
pub fn expand_offline(split: &DatasetSplit, seed: u64) -> Result<DatasetSplit> {
    if split.role != SplitRole::Train {
        return Err(Error::Contract(format!(
            "offline augmentation applies to the training split only, not {}",
            split.role
        )));
    }
    if split.is_empty() {
        return Err(Error::Data("cannot expand an empty training split".into()));
    }
    let profile = AugmentProfile::offline();
    let mut samples = Vec::with_capacity(split.len() * (OFFLINE_COPIES + 1));
    for (i, s) in split.samples.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        samples.push(s.clone());
        for k in 1..=OFFLINE_COPIES {
            let (image, mask) = augment_pair(&s.image, s.mask.as_ref(), &profile, &mut rng)?;
            samples.push(Sample {
                id: format!("{}_aug{k}", s.id),
                image,
                mask,
                label: s.label,
            });
        }
    }
    Ok(DatasetSplit {
        role: split.role,
        classes: split.classes,
        samples,
        provenance: format!("{} + offline augmentation seed={seed}", split.provenance),
    })
}
