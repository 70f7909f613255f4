//! Cross-entropy losses. Probabilities are clamped to `[1e−7, 1 − 1e−7]` before
//! taking logarithms.

use crate::autograd::{Graph, NodeId, Op};
use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

pub const PROB_CLAMP: f64 = 1e-7;

fn clamp<T: Real>(p: T) -> T {
    p.max(T::lit(PROB_CLAMP)).min(T::lit(1.0 - PROB_CLAMP))
}

fn check<T: Real>(p: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if p.shape() != y.shape() {
        return Err(shape_err!(
            "loss: prediction {} vs target {}",
            p.shape(),
            y.shape()
        ));
    }
    if p.is_empty() {
        return Err(shape_err!("loss over an empty tensor"));
    }
    Ok(())
}

/// Mean over all elements of `−[y·ln p + (1−y)·ln(1−p)]`.
pub fn bce<T: Real>(p: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    check(p, y)?;
    let total: f64 = p
        .data()
        .iter()
        .zip(y.data())
        .map(|(&p, &y)| {
            let (p, y) = (clamp(p).as_f64(), y.as_f64());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(T::lit(total / p.len() as f64))
}

pub(crate) fn bce_backward<T: Real>(p: &Tensor<T>, y: &Tensor<T>, scale: T) -> Tensor<T> {
    let n = T::from_usize(p.len()).unwrap();
    let lo = T::lit(PROB_CLAMP);
    let hi = T::lit(1.0 - PROB_CLAMP);
    let mut d = p.clone();
    d.data_mut().iter_mut().zip(y.data()).for_each(|(v, &y)| {
        let raw = *v;
        *v = if raw < lo || raw > hi {
            T::zero()
        } else {
            scale * (raw - y) / (raw * (T::one() - raw)) / n
        };
    });
    d
}

/// Mean over batch items of `−Σ_c y_c·ln p_c` for class distributions `p` and
/// one-hot targets `y`, both `N×1×1×C`.
pub fn categorical_ce<T: Real>(p: &Tensor<T>, y: &Tensor<T>) -> Result<T> {
    check(p, y)?;
    let n = p.shape().n as f64;
    let total: f64 = p
        .data()
        .iter()
        .zip(y.data())
        .filter(|(_, &y)| y != T::zero())
        .map(|(&p, &y)| -y.as_f64() * clamp(p).as_f64().ln())
        .sum();
    Ok(T::lit(total / n))
}

pub(crate) fn categorical_ce_backward<T: Real>(p: &Tensor<T>, y: &Tensor<T>, scale: T) -> Tensor<T> {
    let n = T::from_usize(p.shape().n).unwrap();
    let lo = T::lit(PROB_CLAMP);
    let mut d = p.clone();
    d.data_mut().iter_mut().zip(y.data()).for_each(|(v, &y)| {
        let raw = *v;
        *v = if y == T::zero() || raw < lo {
            T::zero()
        } else {
            -scale * y / raw / n
        };
    });
    d
}

impl<T: Real> Graph<T> {
    /// Pixel- or element-wise binary cross-entropy against a constant target.
    pub fn bce_loss(&mut self, p: NodeId, target: Tensor<T>) -> Result<NodeId> {
        let v = bce(self.value(p), &target)?;
        let rg = self.requires_grad(p);
        Ok(self.push(Tensor::scalar(v), Op::Bce { p, target }, rg))
    }

    /// Categorical cross-entropy of a softmax output against one-hot targets.
    pub fn categorical_ce_loss(&mut self, p: NodeId, target: Tensor<T>) -> Result<NodeId> {
        let v = categorical_ce(self.value(p), &target)?;
        let rg = self.requires_grad(p);
        Ok(self.push(Tensor::scalar(v), Op::CategoricalCe { p, target }, rg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::vector(1, v.len()), v.to_vec()).unwrap()
    }

    #[test]
    fn half_probability_costs_ln_two_either_way() {
        assert!((bce(&t(&[0.5]), &t(&[1.0])).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bce(&t(&[0.5]), &t(&[0.0])).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_is_nearly_free() {
        let l = bce(&t(&[1.0 - 1e-9, 1e-9]), &t(&[1.0, 0.0])).unwrap();
        assert!(l < 1e-5, "{l}");
    }

    #[test]
    fn categorical_reduces_to_negative_log_of_true_class() {
        let l = categorical_ce(&t(&[0.2, 0.5, 0.3]), &t(&[0.0, 1.0, 0.0])).unwrap();
        assert!((l - (-(0.5f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(bce(&t(&[0.5, 0.5]), &t(&[1.0])).is_err());
    }
}
