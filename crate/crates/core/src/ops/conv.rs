//! 2-D convolution with stride and dilation, via im2col + GEMM.
//!
//! Kernels are stored as `kh × kw × cin × cout`, which read row-major is exactly
//! the `(kh·kw·cin) × cout` right-hand matrix of the GEMM.

use crate::autograd::{Graph, NodeId, Op};
use crate::error::{config_err, shape_err, Result};
use crate::tensor::parallel::{for_each_chunk_mut, map_indices};
use crate::tensor::{gemm, MatRef, Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Pad so that a stride-1 convolution preserves spatial size.
    Same,
    /// No padding.
    Valid,
}

/// Hyperparameters of one convolution layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub dilation: usize,
    pub padding: Padding,
}

impl ConvSpec {
    pub const fn same() -> Self {
        ConvSpec {
            stride: 1,
            dilation: 1,
            padding: Padding::Same,
        }
    }

    pub const fn valid() -> Self {
        ConvSpec {
            stride: 1,
            dilation: 1,
            padding: Padding::Valid,
        }
    }

    pub const fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub const fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }
}

/// Spatial extent covered by a dilated kernel: `k + (k−1)(d−1)`.
pub const fn dilated_extent(k: usize, dilation: usize) -> usize {
    k + (k - 1) * (dilation - 1)
}

/// Fully resolved geometry of a convolution on a concrete input shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub dilation: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn axis_geometry(
    axis: &str,
    size: usize,
    k: usize,
    spec: &ConvSpec,
) -> Result<(usize, usize)> {
    let extent = dilated_extent(k, spec.dilation);
    match spec.padding {
        Padding::Valid => {
            if size < extent {
                return Err(config_err!(
                    "{axis}: input size {size} is smaller than the dilated kernel extent {extent}; output would be empty"
                ));
            }
            Ok(((size - extent) / spec.stride + 1, 0))
        }
        Padding::Same => {
            if size == 0 {
                return Err(config_err!("{axis}: empty input"));
            }
            let out = size.div_ceil(spec.stride);
            let total = ((out - 1) * spec.stride + extent).saturating_sub(size);
            Ok((out, total / 2))
        }
    }
}

impl ConvGeom {
    /// Resolves the geometry for an input of shape `input` and a kernel of `kernel` dims.
    pub fn resolve(input: Shape, kernel: Shape, spec: &ConvSpec) -> Result<Self> {
        let (kh, kw, cin, cout) = (kernel.n, kernel.h, kernel.w, kernel.c);
        if spec.stride == 0 || spec.dilation == 0 {
            return Err(config_err!(
                "stride ({}) and dilation ({}) must be at least 1",
                spec.stride,
                spec.dilation
            ));
        }
        if kh == 0 || kw == 0 || cout == 0 {
            return Err(config_err!("empty kernel {kernel}"));
        }
        if input.c != cin {
            return Err(shape_err!(
                "conv2d: input has {} channels but kernel expects {cin}",
                input.c
            ));
        }
        let (out_h, pad_top) = axis_geometry("height", input.h, kh, spec)?;
        let (out_w, pad_left) = axis_geometry("width", input.w, kw, spec)?;
        Ok(ConvGeom {
            kh,
            kw,
            cin,
            cout,
            stride: spec.stride,
            dilation: spec.dilation,
            pad_top,
            pad_left,
            in_h: input.h,
            in_w: input.w,
            out_h,
            out_w,
        })
    }

    fn k(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// A plain 1×1, stride-1, unpadded convolution is a matrix product on the input as-is.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }

    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize) -> Option<usize> {
        let pos = (o * self.stride + k * self.dilation) as isize - pad as isize;
        (pos >= 0).then_some(pos as usize)
    }

    fn im2col<T: Real>(&self, item: &[T], cols: &mut [T]) {
        let (cin, k) = (self.cin, self.k());
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &mut cols[(oy * self.out_w + ox) * k..][..k];
                for ky in 0..self.kh {
                    let iy = self.source(oy, ky, self.pad_top).filter(|&y| y < self.in_h);
                    for kx in 0..self.kw {
                        let dst = &mut row[(ky * self.kw + kx) * cin..][..cin];
                        let ix = self.source(ox, kx, self.pad_left).filter(|&x| x < self.in_w);
                        match (iy, ix) {
                            (Some(y), Some(x)) => {
                                dst.copy_from_slice(&item[(y * self.in_w + x) * cin..][..cin])
                            }
                            _ => dst.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Real>(&self, cols: &[T], item: &mut [T]) {
        let (cin, k) = (self.cin, self.k());
        item.fill(T::zero());
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &cols[(oy * self.out_w + ox) * k..][..k];
                for ky in 0..self.kh {
                    let Some(y) = self.source(oy, ky, self.pad_top).filter(|&y| y < self.in_h)
                    else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(x) = self.source(ox, kx, self.pad_left).filter(|&x| x < self.in_w)
                        else {
                            continue;
                        };
                        let src = &row[(ky * self.kw + kx) * cin..][..cin];
                        let dst = &mut item[(y * self.in_w + x) * cin..][..cin];
                        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
                    }
                }
            }
        }
    }
}

/// Forward pass. `bias`, when present, has `cout` entries.
pub fn forward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: &ConvSpec,
) -> Result<(Tensor<T>, ConvGeom)> {
    let geom = ConvGeom::resolve(input.shape(), kernel.shape(), spec)?;
    if let Some(b) = bias {
        if b.len() != geom.cout {
            return Err(shape_err!(
                "conv2d: bias has {} entries for {} output channels",
                b.len(),
                geom.cout
            ));
        }
    }
    let n = input.shape().n;
    let out_shape = Shape::new(n, geom.out_h, geom.out_w, geom.cout);
    let mut out = Tensor::zeros(out_shape);
    let (p, k, cout) = (geom.out_pixels(), geom.k(), geom.cout);
    let kmat = MatRef::new(kernel.data(), k, cout);
    for_each_chunk_mut(out.data_mut(), out_shape.item_len(), |i, out_item| {
        let item = input.item(i);
        if geom.is_pointwise() {
            gemm(MatRef::new(item, p, k), kmat, out_item, false);
        } else {
            let mut cols = vec![T::zero(); p * k];
            geom.im2col(item, &mut cols);
            gemm(MatRef::new(&cols, p, k), kmat, out_item, false);
        }
        if let Some(b) = bias {
            for row in out_item.chunks_exact_mut(cout) {
                row.iter_mut().zip(b.data()).for_each(|(v, &bv)| *v += bv);
            }
        }
    });
    Ok((out, geom))
}

pub(crate) struct ConvGrads<T: Real> {
    pub input: Option<Tensor<T>>,
    pub kernel: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

struct ItemGrads<T> {
    input: Option<Vec<T>>,
    kernel: Option<Vec<T>>,
    bias: Option<Vec<T>>,
}

pub(crate) fn backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    geom: &ConvGeom,
    grad_out: &Tensor<T>,
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> ConvGrads<T> {
    let in_shape = input.shape();
    let (p, k, cout) = (geom.out_pixels(), geom.k(), geom.cout);
    let kmat = MatRef::new(kernel.data(), k, cout);

    // Per-item partials, summed in item order below so the result does not
    // depend on how items were scheduled.
    let per_item: Vec<ItemGrads<T>> = map_indices(in_shape.n, |i| {
        let x = input.item(i);
        let dy = grad_out.item(i);
        let dy_mat = MatRef::new(dy, p, cout);
        let pointwise = geom.is_pointwise();
        let cols = if want_kernel && !pointwise {
            let mut c = vec![T::zero(); p * k];
            geom.im2col(x, &mut c);
            Some(c)
        } else {
            None
        };
        let kernel_grad = want_kernel.then(|| {
            let a = match &cols {
                Some(c) => MatRef::new(c.as_slice(), p, k),
                None => MatRef::new(x, p, k),
            };
            let mut dk = vec![T::zero(); k * cout];
            gemm(a.t(), dy_mat, &mut dk, false);
            dk
        });
        let bias_grad = want_bias.then(|| {
            let mut db = vec![T::zero(); cout];
            for row in dy.chunks_exact(cout) {
                db.iter_mut().zip(row).for_each(|(d, &g)| *d += g);
            }
            db
        });
        let input_grad = want_input.then(|| {
            let mut dcols = vec![T::zero(); p * k];
            gemm(dy_mat, kmat.t(), &mut dcols, false);
            if pointwise {
                dcols
            } else {
                let mut dx = vec![T::zero(); in_shape.item_len()];
                geom.col2im(&dcols, &mut dx);
                dx
            }
        });
        ItemGrads {
            input: input_grad,
            kernel: kernel_grad,
            bias: bias_grad,
        }
    });

    let mut grads = ConvGrads {
        input: want_input.then(|| Tensor::zeros(in_shape)),
        kernel: want_kernel.then(|| Tensor::zeros(kernel.shape())),
        bias: want_bias.then(|| Tensor::zeros(Shape::vector(1, cout))),
    };
    for (i, item) in per_item.into_iter().enumerate() {
        if let (Some(dst), Some(src)) = (grads.input.as_mut(), item.input) {
            dst.item_mut(i).copy_from_slice(&src);
        }
        if let (Some(dst), Some(src)) = (grads.kernel.as_mut(), item.kernel) {
            dst.data_mut().iter_mut().zip(&src).for_each(|(d, &s)| *d += s);
        }
        if let (Some(dst), Some(src)) = (grads.bias.as_mut(), item.bias) {
            dst.data_mut().iter_mut().zip(&src).for_each(|(d, &s)| *d += s);
        }
    }
    grads
}

impl<T: Real> Graph<T> {
    /// `kernel` must hold a `kh × kw × cin × cout` tensor; `bias` a `cout` vector.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        let (out, geom) = forward(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            &spec,
        )?;
        let mut deps = vec![input, kernel];
        deps.extend(bias);
        let rg = self.any_grad(&deps);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
            rg,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct seven-loop convolution used as the oracle.
    fn direct(input: &Tensor<f64>, kernel: &Tensor<f64>, spec: &ConvSpec) -> Tensor<f64> {
        let g = ConvGeom::resolve(input.shape(), kernel.shape(), spec).unwrap();
        let n = input.shape().n;
        let mut out = Tensor::zeros(Shape::new(n, g.out_h, g.out_w, g.cout));
        let os = out.shape();
        for b in 0..n {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for co in 0..g.cout {
                        let mut acc = 0.0;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let iy = (oy * g.stride + ky * g.dilation) as isize - g.pad_top as isize;
                                let ix = (ox * g.stride + kx * g.dilation) as isize - g.pad_left as isize;
                                if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                                    continue;
                                }
                                for ci in 0..g.cin {
                                    acc += input.at(b, iy as usize, ix as usize, ci)
                                        * kernel.at(ky, kx, ci, co);
                                }
                            }
                        }
                        out.data_mut()[os.index(b, oy, ox, co)] = acc;
                    }
                }
            }
        }
        out
    }

    fn pseudo(shape: Shape, seed: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |i| ((i as f64 + seed) * 0.7311).sin())
    }

    #[test]
    fn table_shapes() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 320, 320, 3));
        let k = Tensor::<f32>::zeros(Shape::new(3, 3, 3, 16));
        let (same, _) = forward(&x, &k, None, &ConvSpec::same()).unwrap();
        assert_eq!(same.shape(), Shape::new(1, 320, 320, 16));
        let (valid, _) = forward(&x, &k, None, &ConvSpec::valid()).unwrap();
        assert_eq!(valid.shape(), Shape::new(1, 318, 318, 16));
    }

    #[test]
    fn ones_sum_to_nine() {
        let x = Tensor::<f32>::full(Shape::new(1, 3, 3, 1), 1.0);
        let k = Tensor::<f32>::full(Shape::new(3, 3, 1, 1), 1.0);
        let (y, _) = forward(&x, &k, None, &ConvSpec::valid()).unwrap();
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn dilation_eighteen_exact_extent_gives_single_output() {
        assert_eq!(dilated_extent(3, 18), 37);
        let x = pseudo(Shape::new(1, 37, 37, 1), 0.0);
        let k = pseudo(Shape::new(3, 3, 1, 1), 5.0);
        let spec = ConvSpec::valid().with_dilation(18);
        let (y, _) = forward(&x, &k, None, &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 1));
        let expect = direct(&x, &k, &spec);
        assert!((y.data()[0] - expect.data()[0]).abs() < 1e-12);
        // 36×36 is one pixel short of the extent
        let small = Tensor::<f64>::zeros(Shape::new(1, 36, 37, 1));
        let err = forward(&small, &k, None, &spec).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
    }

    #[test]
    fn matches_direct_convolution() {
        let cases = [
            (Shape::new(2, 7, 6, 3), Shape::new(3, 3, 3, 4), ConvSpec::same()),
            (Shape::new(1, 9, 9, 2), Shape::new(3, 3, 2, 3), ConvSpec::same().with_dilation(3)),
            (Shape::new(2, 8, 8, 4), Shape::new(1, 1, 4, 5), ConvSpec::same().with_stride(2)),
            (Shape::new(1, 7, 9, 2), Shape::new(3, 3, 2, 2), ConvSpec::valid().with_stride(2)),
            (Shape::new(1, 5, 5, 3), Shape::new(1, 1, 3, 2), ConvSpec::same()),
        ];
        for (i, (xs, ks, spec)) in cases.iter().enumerate() {
            let x = pseudo(*xs, i as f64);
            let k = pseudo(*ks, 10.0 + i as f64);
            let (y, _) = forward(&x, &k, None, spec).unwrap();
            let e = direct(&x, &k, spec);
            assert_eq!(y.shape(), e.shape());
            for (a, b) in y.data().iter().zip(e.data()) {
                assert!((a - b).abs() < 1e-12, "case {i}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 4, 4, 2));
        let k = Tensor::<f32>::zeros(Shape::new(3, 3, 3, 1));
        assert!(matches!(
            forward(&x, &k, None, &ConvSpec::same()),
            Err(crate::Error::Shape(_))
        ));
    }
}
