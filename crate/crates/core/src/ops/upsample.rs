//! Bilinear resampling, half-pixel-centre ("align corners = false") convention
//! with edge clamping: source coordinate `(i + 0.5)·in/out − 0.5`, clamped to the
//! valid range.

use crate::autograd::{Graph, NodeId, Op};
use crate::error::{config_err, Result};
use crate::tensor::parallel::for_each_chunk_mut;
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug)]
struct Tap<T> {
    lo: usize,
    hi: usize,
    frac: T,
}

fn taps<T: Real>(in_len: usize, out_len: usize) -> Vec<Tap<T>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            Tap {
                lo,
                hi,
                frac: T::lit(src - lo as f64),
            }
        })
        .collect()
}

/// Resamples every item to `out_h × out_w`.
pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 || out_h == 0 || out_w == 0 {
        return Err(config_err!("cannot resample {s} to {out_h}×{out_w}"));
    }
    let ty = taps::<T>(s.h, out_h);
    let tx = taps::<T>(s.w, out_w);
    let out_shape = Shape::new(s.n, out_h, out_w, s.c);
    let mut out = Tensor::zeros(out_shape);
    let c = s.c;
    for_each_chunk_mut(out.data_mut(), out_shape.item_len(), |i, o| {
        let x = input.item(i);
        for (oy, ry) in ty.iter().enumerate() {
            let (r0, r1) = (&x[ry.lo * s.w * c..], &x[ry.hi * s.w * c..]);
            for (ox, rx) in tx.iter().enumerate() {
                let dst = &mut o[(oy * out_w + ox) * c..][..c];
                for ch in 0..c {
                    let top = r0[rx.lo * c + ch] * (T::one() - rx.frac) + r0[rx.hi * c + ch] * rx.frac;
                    let bot = r1[rx.lo * c + ch] * (T::one() - rx.frac) + r1[rx.hi * c + ch] * rx.frac;
                    dst[ch] = top * (T::one() - ry.frac) + bot * ry.frac;
                }
            }
        }
    });
    Ok(out)
}

fn resize_backward<T: Real>(in_shape: Shape, g: &Tensor<T>) -> Tensor<T> {
    let (out_h, out_w) = (g.shape().h, g.shape().w);
    let ty = taps::<T>(in_shape.h, out_h);
    let tx = taps::<T>(in_shape.w, out_w);
    let c = in_shape.c;
    let mut dx = Tensor::zeros(in_shape);
    for_each_chunk_mut(dx.data_mut(), in_shape.item_len(), |i, d| {
        let gi = g.item(i);
        for (oy, ry) in ty.iter().enumerate() {
            for (ox, rx) in tx.iter().enumerate() {
                let src = &gi[(oy * out_w + ox) * c..][..c];
                let w = [
                    (ry.lo, rx.lo, (T::one() - ry.frac) * (T::one() - rx.frac)),
                    (ry.lo, rx.hi, (T::one() - ry.frac) * rx.frac),
                    (ry.hi, rx.lo, ry.frac * (T::one() - rx.frac)),
                    (ry.hi, rx.hi, ry.frac * rx.frac),
                ];
                for (y, x, wt) in w {
                    let dst = &mut d[(y * in_shape.w + x) * c..][..c];
                    dst.iter_mut().zip(src).for_each(|(a, &v)| *a += v * wt);
                }
            }
        }
    });
    dx
}

/// Integer-factor bilinear upsampling.
pub fn bilinear_upsample<T: Real>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(config_err!("upsampling factor must be at least 1"));
    }
    let s = input.shape();
    resize_bilinear(input, s.h * factor, s.w * factor)
}

pub(crate) fn bilinear_backward<T: Real>(in_shape: Shape, _factor: usize, g: &Tensor<T>) -> Tensor<T> {
    resize_backward(in_shape, g)
}

impl<T: Real> Graph<T> {
    pub fn bilinear_upsample(&mut self, input: NodeId, factor: usize) -> Result<NodeId> {
        let out = bilinear_upsample(self.value(input), factor)?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Upsample { input, factor }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_doubles_with_clamped_edges() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 1), vec![0.0f64, 1.0]).unwrap();
        let y = resize_bilinear(&x, 1, 4).unwrap();
        assert_eq!(y.data(), &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn eighty_to_three_twenty() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 80, 80, 1));
        assert_eq!(
            bilinear_upsample(&x, 4).unwrap().shape(),
            Shape::new(1, 320, 320, 1)
        );
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let x = Tensor::full(Shape::new(2, 5, 3, 2), 0.3f32);
        let y = bilinear_upsample(&x, 3).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn affine_ramp_is_reproduced_in_the_interior() {
        let (h, w, f) = (6, 7, 4);
        let x = Tensor::from_fn(Shape::new(1, h, w, 1), |i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            0.5 + 2.0 * y - 1.5 * x
        });
        let y = bilinear_upsample(&x, f).unwrap();
        // interior output pixels map to source coordinates inside [0, len-1]
        for oy in f..(h - 1) * f {
            for ox in f..(w - 1) * f {
                let sy = (oy as f64 + 0.5) / f as f64 - 0.5;
                let sx = (ox as f64 + 0.5) / f as f64 - 0.5;
                let expect = 0.5 + 2.0 * sy - 1.5 * sx;
                assert!((y.at(0, oy, ox, 0) - expect).abs() < 1e-9);
            }
        }
    }
}
