//! 2-D affine transforms about the image centre and resampling through them.

use crate::tensor::Tensor;

/// Sampled components of one transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformParams {
    /// Clockwise on screen (y axis pointing down).
    pub rotation_deg: f64,
    /// x-shear factor: `x' = x + shear·y`.
    pub shear: f64,
    /// Content scale; above 1 enlarges.
    pub zoom: f64,
    /// Fractions of the width and height.
    pub shift_x: f64,
    pub shift_y: f64,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams {
        rotation_deg: 0.0,
        shear: 0.0,
        zoom: 1.0,
        shift_x: 0.0,
        shift_y: 0.0,
    };
}

/// Maps output pixel coordinates `(x, y)` (pixel-index units) to source
/// coordinates: `src = M · (x, y, 1)`.
///
/// Built from parameters, the forward map is translate ∘ zoom ∘ shear ∘ rotate
/// about the image centre; `M` is its inverse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    pub m: [[f64; 3]; 2],
    pub params: Option<TransformParams>,
}

impl AffineTransform {
    pub const fn identity() -> Self {
        AffineTransform {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            params: Some(TransformParams::IDENTITY),
        }
    }

    pub const fn from_matrix(m: [[f64; 3]; 2]) -> Self {
        AffineTransform { m, params: None }
    }

    pub fn from_params(p: TransformParams, height: usize, width: usize) -> Self {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (tx, ty) = (p.shift_x * width as f64, p.shift_y * height as f64);
        let (sin, cos) = p.rotation_deg.to_radians().sin_cos();
        // Inverse of Z·Sh·R is R(−θ)·Sh(−k)·(1/z).
        let inv_z = 1.0 / p.zoom;
        let sh = [[inv_z, -p.shear * inv_z], [0.0, inv_z]];
        let r = [[cos, sin], [-sin, cos]];
        let a = [
            [
                r[0][0] * sh[0][0] + r[0][1] * sh[1][0],
                r[0][0] * sh[0][1] + r[0][1] * sh[1][1],
            ],
            [
                r[1][0] * sh[0][0] + r[1][1] * sh[1][0],
                r[1][0] * sh[0][1] + r[1][1] * sh[1][1],
            ],
        ];
        let (ox, oy) = (cx + tx, cy + ty);
        AffineTransform {
            m: [
                [a[0][0], a[0][1], cx - a[0][0] * ox - a[0][1] * oy],
                [a[1][0], a[1][1], cy - a[1][0] * ox - a[1][1] * oy],
            ],
            params: Some(p),
        }
    }

    /// Source coordinates sampled for output pixel `(x, y)`.
    pub fn source(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        (
            m[0][0] * x + m[0][1] * y + m[0][2],
            m[1][0] * x + m[1][1] * y + m[1][2],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    Bilinear,
    Nearest,
}

/// Value used where the source coordinate falls outside the image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    Value(f32),
    /// Replicate the nearest edge pixel.
    Edge,
}

/// Resamples every item of `img` through `t`. Output has the input's shape.
pub fn apply_transform(img: &Tensor<f32>, t: &AffineTransform, interp: Interp, fill: Fill) -> Tensor<f32> {
    let s = img.shape();
    let (h, w, c) = (s.h, s.w, s.c);
    let (maxx, maxy) = ((w - 1) as f64, (h - 1) as f64);
    const EPS: f64 = 1e-9;
    let mut out = Tensor::zeros(s);
    for n in 0..s.n {
        let src = img.item(n);
        let dst = out.item_mut(n);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = t.source(x as f64, y as f64);
                let px = &mut dst[(y * w + x) * c..(y * w + x + 1) * c];
                let inside = sx >= -EPS && sx <= maxx + EPS && sy >= -EPS && sy <= maxy + EPS;
                let (sx, sy) = match (inside, fill) {
                    (false, Fill::Value(v)) if interp == Interp::Bilinear => {
                        px.fill(v);
                        continue;
                    }
                    _ => (sx, sy),
                };
                match interp {
                    Interp::Nearest => {
                        let (ix, iy) = (sx.round(), sy.round());
                        let in_bounds = ix >= 0.0 && ix <= maxx && iy >= 0.0 && iy <= maxy;
                        if !in_bounds {
                            if let Fill::Value(v) = fill {
                                px.fill(v);
                                continue;
                            }
                        }
                        let (ix, iy) = (ix.clamp(0.0, maxx) as usize, iy.clamp(0.0, maxy) as usize);
                        let o = (iy * w + ix) * c;
                        px.copy_from_slice(&src[o..o + c]);
                    }
                    Interp::Bilinear => {
                        let (sx, sy) = (sx.clamp(0.0, maxx), sy.clamp(0.0, maxy));
                        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                        let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
                        for (ch, v) in px.iter_mut().enumerate() {
                            let at = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                            let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
                            let bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
                            *v = top + (bottom - top) * fy;
                        }
                    }
                }
            }
        }
    }
    out
}
