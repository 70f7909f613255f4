use crate::autograd::{Graph, NodeId, Op};
use crate::error::{config_err, shape_err, Result};
use crate::tensor::parallel::for_each_chunk_pair_mut;
use crate::tensor::{Real, Shape, Tensor};

/// Unpadded max pooling. Returns the output and, per output element, the
/// within-item flat index of the winning input element.
pub fn max_pool_forward<T: Real>(
    input: &Tensor<T>,
    size: usize,
    stride: usize,
) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = input.shape();
    if size == 0 || stride == 0 {
        return Err(config_err!("pool size ({size}) and stride ({stride}) must be at least 1"));
    }
    if size > s.h || size > s.w {
        return Err(config_err!(
            "pool window {size}×{size} is larger than the {}×{} input",
            s.h,
            s.w
        ));
    }
    if s.item_len() > u32::MAX as usize {
        return Err(shape_err!("item of {s} too large for pooling indices"));
    }
    let (oh, ow) = ((s.h - size) / stride + 1, (s.w - size) / stride + 1);
    let out_shape = Shape::new(s.n, oh, ow, s.c);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0u32; out_shape.numel()];
    let item_out = out_shape.item_len();
    for_each_chunk_pair_mut(out.data_mut(), item_out, &mut argmax, item_out, |i, o, a| {
        let x = input.item(i);
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..s.c {
                    let mut best_idx = ((oy * stride) * s.w + ox * stride) * s.c + c;
                    let mut best = x[best_idx];
                    for ky in 0..size {
                        for kx in 0..size {
                            let idx = ((oy * stride + ky) * s.w + ox * stride + kx) * s.c + c;
                            if x[idx] > best {
                                best = x[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o_idx = (oy * ow + ox) * s.c + c;
                    o[o_idx] = best;
                    a[o_idx] = best_idx as u32;
                }
            }
        }
    });
    Ok((out, argmax))
}

pub(crate) fn max_pool_backward<T: Real>(in_shape: Shape, argmax: &[u32], g: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let item_in = in_shape.item_len();
    let item_out = g.shape().item_len();
    for i in 0..in_shape.n {
        let gi = g.item(i);
        let ai = &argmax[i * item_out..(i + 1) * item_out];
        let dxi = &mut dx.data_mut()[i * item_in..(i + 1) * item_in];
        for (&src, &gv) in ai.iter().zip(gi) {
            dxi[src as usize] += gv;
        }
    }
    dx
}

/// Spatial mean per channel: `N×H×W×C → N×1×1×C`.
pub fn global_avg_pool_forward<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.h == 0 || s.w == 0 {
        return Err(shape_err!("global average pooling needs a non-empty map, got {s}"));
    }
    let mut out = Tensor::zeros(Shape::vector(s.n, s.c));
    let scale = T::one() / T::from_usize(s.pixels()).unwrap();
    for i in 0..s.n {
        let x = input.item(i);
        let o = out.item_mut(i);
        for px in x.chunks_exact(s.c) {
            o.iter_mut().zip(px).for_each(|(a, &v)| *a += v);
        }
        o.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(out)
}

pub(crate) fn global_avg_pool_backward<T: Real>(in_shape: Shape, g: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(in_shape);
    let scale = T::one() / T::from_usize(in_shape.pixels()).unwrap();
    for i in 0..in_shape.n {
        let gi: Vec<T> = g.item(i).iter().map(|&v| v * scale).collect();
        for px in dx.item_mut(i).chunks_exact_mut(in_shape.c) {
            px.copy_from_slice(&gi);
        }
    }
    dx
}

impl<T: Real> Graph<T> {
    pub fn max_pool2d(&mut self, input: NodeId, size: usize, stride: usize) -> Result<NodeId> {
        let (out, argmax) = max_pool_forward(self.value(input), size, stride)?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::MaxPool { input, argmax }, rg))
    }

    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let out = global_avg_pool_forward(self.value(input))?;
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::GlobalAvgPool { input }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognition_pool_geometry() {
        for (inp, out, c) in [(318, 106, 16), (104, 34, 32), (32, 10, 64)] {
            let x = Tensor::<f32>::zeros(Shape::new(1, inp, inp, c));
            let (y, _) = max_pool_forward(&x, 3, 3).unwrap();
            assert_eq!(y.shape(), Shape::new(1, out, out, c));
        }
    }

    #[test]
    fn max_of_two_by_two() {
        let x = Tensor::<f32>::from_vec(Shape::new(1, 2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, a) = max_pool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(a, vec![3]);
    }

    #[test]
    fn window_larger_than_input_is_rejected() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 2, 1));
        assert!(matches!(max_pool_forward(&x, 3, 1), Err(crate::Error::Config(_))));
    }

    #[test]
    fn global_average() {
        let x = Tensor::<f64>::from_vec(Shape::new(1, 2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(global_avg_pool_forward(&x).unwrap().data(), &[2.5]);
        let c = Tensor::<f64>::full(Shape::new(2, 8, 8, 128), 0.375);
        let y = global_avg_pool_forward(&c).unwrap();
        assert_eq!(y.shape(), Shape::vector(2, 128));
        assert!(y.data().iter().all(|&v| v == 0.375));
    }
}
