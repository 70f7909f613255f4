use rand::Rng;

use crate::autograd::{Graph, Mode, NodeId, Op};
use crate::error::{config_err, Result};
use crate::tensor::{Real, Tensor};

/// Inverted dropout mask: each entry is 0 with probability `rate`, else `1/(1−rate)`.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

impl<T: Real> Graph<T> {
    /// Identity in eval mode or at rate 0 (the input node itself is returned).
    /// In train mode zeroes entries with probability `rate` and scales survivors by `1/(1−rate)`.
    pub fn dropout(&mut self, input: NodeId, rate: f64, mode: Mode) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(config_err!("dropout rate {rate} outside [0, 1)"));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(input);
        }
        let mask: Vec<T> = dropout_mask(self.value(input).len(), rate, &mut self.rng);
        let mut out: Tensor<T> = self.value(input).clone();
        out.data_mut().iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
        let rg = self.requires_grad(input);
        Ok(self.push(out, Op::Dropout { input, mask }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn eval_and_zero_rate_are_identity() {
        let mut g = Graph::<f32>::with_seed(3);
        let x = g.input(Tensor::from_fn(Shape::vector(2, 10), |i| i as f32 - 4.5));
        assert_eq!(g.dropout(x, 0.75, Mode::Eval).unwrap(), x);
        assert_eq!(g.dropout(x, 0.0, Mode::Train).unwrap(), x);
    }

    #[test]
    fn inverted_scaling_preserves_the_mean() {
        let mut g = Graph::<f64>::with_seed(42);
        let x = g.input(Tensor::full(Shape::vector(1, 1_000_000), 1.0));
        let y = g.dropout(x, 0.5, Mode::Train).unwrap();
        let mean = g.value(y).mean();
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!(g.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rate_one_is_rejected() {
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::zeros(Shape::vector(1, 4)));
        assert!(g.dropout(x, 1.0, Mode::Train).is_err());
    }
}
