use crate::autograd::{Graph, NodeId, Op};
use crate::error::Result;
use crate::tensor::parallel::{for_each_chunk_mut, ELEMENTWISE_GRAIN};
use crate::tensor::{Real, Tensor};

fn map_par<T: Real>(x: &Tensor<T>, f: impl Fn(T) -> T + Sync + Send) -> Tensor<T> {
    let mut out = x.clone();
    for_each_chunk_mut(out.data_mut(), ELEMENTWISE_GRAIN, |_, c| {
        c.iter_mut().for_each(|v| *v = f(*v))
    });
    out
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    map_par(x, |v| if v > T::zero() { v } else { T::zero() })
}

pub(crate) fn relu_backward<T: Real>(out: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let mut d = g.clone();
    d.data_mut().iter_mut().zip(out.data()).for_each(|(d, &y)| {
        if y <= T::zero() {
            *d = T::zero()
        }
    });
    d
}

/// Logistic function, kept strictly inside (0, 1) even where it saturates.
#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let hi = T::one() - T::epsilon() / (T::one() + T::one());
    y.max(T::min_positive_value()).min(hi)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    map_par(x, sigmoid_scalar)
}

pub(crate) fn sigmoid_backward<T: Real>(out: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let mut d = g.clone();
    d.data_mut()
        .iter_mut()
        .zip(out.data())
        .for_each(|(d, &y)| *d *= y * (T::one() - y));
    d
}

/// Softmax over the channel axis (per pixel; per item for `N×1×1×C` vectors).
pub fn softmax<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let c = x.shape().c;
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / total);
    }
    out
}

pub(crate) fn softmax_backward<T: Real>(out: &Tensor<T>, g: &Tensor<T>) -> Tensor<T> {
    let c = out.shape().c;
    let mut d = g.clone();
    for (drow, yrow) in d.data_mut().chunks_exact_mut(c).zip(out.data().chunks_exact(c)) {
        let dot: T = drow.iter().zip(yrow).map(|(&g, &y)| g * y).sum();
        drow.iter_mut()
            .zip(yrow)
            .for_each(|(g, &y)| *g = y * (*g - dot));
    }
    d
}

impl<T: Real> Graph<T> {
    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let out = relu(self.value(input));
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Relu { input }, rg))
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId> {
        let out = sigmoid(self.value(input));
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Sigmoid { input }, rg))
    }

    pub fn softmax(&mut self, input: NodeId) -> Result<NodeId> {
        let out = softmax(self.value(input));
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Softmax { input }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        assert!(sigmoid_scalar(100.0f32) < 1.0);
        assert!(sigmoid_scalar(-200.0f32) > 0.0);
    }

    #[test]
    fn softmax_closed_form() {
        let x = Tensor::from_vec(Shape::vector(1, 2), vec![0.0f64, 3.0f64.ln()]).unwrap();
        let y = softmax(&x);
        assert!((y.data()[0] - 0.25).abs() < 1e-15);
        assert!((y.data()[1] - 0.75).abs() < 1e-15);
        let u = softmax(&Tensor::full(Shape::vector(2, 5), 7.5f64));
        assert!(u.data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn relu_zeroes_negatives() {
        let x = Tensor::from_vec(Shape::vector(1, 3), vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }
}
