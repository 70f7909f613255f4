use crate::autograd::{Graph, NodeId, Op};
use crate::error::{shape_err, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Concatenates along channels in argument order.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| shape_err!("concat of zero tensors"))?
        .shape();
    let mut c_total = 0;
    for t in inputs {
        let s = t.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(shape_err!("concat: {s} does not match {first} spatially"));
        }
        c_total += s.c;
    }
    let out_shape = Shape::new(first.n, first.h, first.w, c_total);
    let mut out = Tensor::zeros(out_shape);
    let pixels = first.n * first.h * first.w;
    let mut offset = 0;
    for t in inputs {
        let c = t.shape().c;
        for p in 0..pixels {
            out.data_mut()[p * c_total + offset..][..c].copy_from_slice(&t.data()[p * c..][..c]);
        }
        offset += c;
    }
    Ok(out)
}

pub(crate) fn concat_backward<T: Real>(shapes: &[Shape], g: &Tensor<T>) -> Vec<Tensor<T>> {
    let c_total = g.shape().c;
    let pixels = g.len() / c_total.max(1);
    let mut offset = 0;
    shapes
        .iter()
        .map(|&s| {
            let mut t = Tensor::zeros(s);
            for p in 0..pixels {
                t.data_mut()[p * s.c..][..s.c].copy_from_slice(&g.data()[p * c_total + offset..][..s.c]);
            }
            offset += s.c;
            t
        })
        .collect()
}

/// Elementwise sum of two same-shaped tensors.
pub fn add<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = a.clone();
    out.add_assign(b)?;
    Ok(out)
}

impl<T: Real> Graph<T> {
    pub fn concat_channels(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() == 1 {
            return Ok(inputs[0]);
        }
        let vals: Vec<&Tensor<T>> = inputs.iter().map(|&i| self.value(i)).collect();
        let out = concat_channels(&vals)?;
        let rg = self.any_grad(inputs);
        Ok(self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = add(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let out = Tensor::scalar(self.value(input).sum());
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Sum { input }, rg))
    }

    /// `Σ wᵢ·xᵢ` for a fixed weight tensor of the input's shape.
    pub fn weighted_sum(&mut self, input: NodeId, weights: Tensor<T>) -> Result<NodeId> {
        if weights.shape() != self.shape(input) {
            return Err(shape_err!(
                "weighted_sum: weights {} for input {}",
                weights.shape(),
                self.shape(input)
            ));
        }
        let s: T = self
            .value(input)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(&x, &w)| x * w)
            .sum();
        let rg = self.requires_grad(input);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { input, weights }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_branches_concatenate_to_160() {
        let maps: Vec<Tensor<f32>> = (0..5).map(|i| Tensor::full(Shape::new(1, 80, 80, 32), i as f32)).collect();
        let refs: Vec<&Tensor<f32>> = maps.iter().collect();
        let y = concat_channels(&refs).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 80, 80, 160));
        assert_eq!(y.at(0, 5, 7, 32 * 3 + 4), 3.0);
    }

    #[test]
    fn add_is_elementwise() {
        let a = Tensor::from_vec(Shape::vector(1, 2), vec![1.0f64, 2.0]).unwrap();
        let b = Tensor::from_vec(Shape::vector(1, 2), vec![3.0f64, 4.0]).unwrap();
        assert_eq!(add(&a, &b).unwrap().data(), &[4.0, 6.0]);
        assert!(add(&a, &Tensor::zeros(Shape::vector(1, 3))).is_err());
    }

    #[test]
    fn single_concat_is_the_input() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::full(Shape::new(1, 2, 2, 3), 1.0));
        assert_eq!(g.concat_channels(&[x]).unwrap(), x);
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 4, 4, 2));
        let b = Tensor::<f32>::zeros(Shape::new(1, 4, 5, 2));
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
