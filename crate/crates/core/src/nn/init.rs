//! Parameter creation with hierarchical names and the initialization rules used
//! throughout the networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{ParamId, ParamStore, Role};
use crate::error::Result;
use crate::ops::norm::{BN_EPSILON, BN_MOMENTUM};
use crate::ops::BatchNormParams;
use crate::tensor::{Real, Shape, Tensor};

/// Registers variables into a [`ParamStore`] under a dotted name prefix.
///
/// Weights are drawn from `N(0, 2/fan_in)`, biases start at zero, batch-norm
/// scale at one and shift at zero.
pub struct ParamBuilder<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a, T: Real> ParamBuilder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// Child builder whose names are prefixed with `name.`.
    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_, T> {
        ParamBuilder {
            prefix: self.name(name),
            store: self.store,
            rng: self.rng,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn name(&self, leaf: &str) -> String {
        if self.prefix.is_empty() {
            leaf.to_string()
        } else {
            format!("{}.{leaf}", self.prefix)
        }
    }

    pub fn he_normal(&mut self, leaf: &str, shape: Shape, fan_in: usize) -> Result<ParamId> {
        let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt())
            .expect("standard deviation is finite and positive");
        let rng = &mut *self.rng;
        let value = Tensor::from_fn(shape, |_| T::lit(normal.sample(rng)));
        self.store.add(self.name(leaf), value, Role::Weight)
    }

    pub fn constant(&mut self, leaf: &str, shape: Shape, value: f64, role: Role) -> Result<ParamId> {
        self.store
            .add(self.name(leaf), Tensor::full(shape, T::lit(value)), role)
    }

    /// Scale, shift, running statistics (mean 0, variance 1) and update counter.
    pub fn batch_norm(&mut self, leaf: &str, channels: usize) -> Result<BatchNormParams> {
        let mut s = self.scope(leaf);
        let v = Shape::vector(1, channels);
        Ok(BatchNormParams {
            gamma: s.constant("gamma", v, 1.0, Role::BnScale)?,
            beta: s.constant("beta", v, 0.0, Role::BnShift)?,
            running_mean: s.constant("running_mean", v, 0.0, Role::RunningMean)?,
            running_var: s.constant("running_var", v, 1.0, Role::RunningVar)?,
            updates: s.constant("updates", Shape::scalar(), 0.0, Role::UpdateCount)?,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        })
    }
}

/// Deterministic generator for parameter initialization.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoped_names_nest() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = init_rng(0);
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        let mut a = pb.scope("seg");
        let mut b = a.scope("unit0");
        b.constant("bias", Shape::vector(1, 3), 0.0, Role::Bias).unwrap();
        assert!(store.id("seg.unit0.bias").is_some());
    }

    #[test]
    fn he_normal_variance_tracks_fan_in() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = init_rng(3);
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        let id = pb.he_normal("w", Shape::new(3, 3, 64, 64), 576).unwrap();
        let v = store.value(id);
        let var = v.data().iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!((var - 2.0 / 576.0).abs() < 0.1 * 2.0 / 576.0, "{var}");
    }

    #[test]
    fn batch_norm_starts_at_identity_statistics() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = init_rng(0);
        let bn = ParamBuilder::new(&mut store, &mut rng).batch_norm("bn", 4).unwrap();
        assert_eq!(store.value(bn.gamma).data(), &[1.0; 4]);
        assert_eq!(store.value(bn.running_var).data(), &[1.0; 4]);
        assert!(!store.get(bn.running_mean).trainable);
        assert!(store.get(bn.beta).trainable);
    }
}
