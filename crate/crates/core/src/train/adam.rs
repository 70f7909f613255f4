//! Adam with bias correction.

use std::path::Path;

use crate::autograd::ParamStore;
use crate::error::{Error, Result};
use crate::models::{Checkpoint, Metadata, Record};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moments per variable (same order as the store) and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, v)| Tensor::zeros(v.value.shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// `θ ← θ − lr·m̂/(√v̂ + ε)` for every trainable variable. Gradients are left
    /// in place; the caller zeroes them.
    pub fn step(&mut self, store: &mut ParamStore<T>, cfg: &AdamConfig) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} variables but the store has {}",
                self.m.len(),
                store.len()
            )));
        }
        self.t = self
            .t
            .checked_add(1)
            .ok_or_else(|| Error::Numeric("Adam step counter overflowed".into()))?;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.epsilon));
        for (i, var) in store.iter_mut().enumerate() {
            if !var.trainable {
                continue;
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((p, &g), m), v) in var
                .value
                .data_mut()
                .iter_mut()
                .zip(var.grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Container with `<name>.m`, `<name>.v` records and a scalar `t`.
    pub fn to_checkpoint(&self, store: &ParamStore<T>, meta: Metadata) -> Checkpoint {
        let mut records = Vec::with_capacity(2 * self.m.len() + 1);
        for (i, (_, var)) in store.iter().enumerate() {
            records.push(Record::from_tensor(&format!("{}.m", var.name), &self.m[i]));
            records.push(Record::from_tensor(&format!("{}.v", var.name), &self.v[i]));
        }
        records.push(Record::scalar("t", self.t as f64));
        Checkpoint { meta, records }
    }

    pub fn from_checkpoint(ck: &Checkpoint, store: &ParamStore<T>) -> Result<Self> {
        let fetch = |name: String, want| -> Result<Tensor<T>> {
            let r = ck
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state has no tensor `{name}`")))?;
            let t: Tensor<T> = r.to_tensor()?;
            if t.shape() != want {
                return Err(Error::Checkpoint(format!(
                    "optimizer tensor `{name}` has shape {} but the variable is {want}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        let mut state = AdamState::new(store);
        for (i, (_, var)) in store.iter().enumerate() {
            state.m[i] = fetch(format!("{}.m", var.name), var.value.shape())?;
            state.v[i] = fetch(format!("{}.v", var.name), var.value.shape())?;
        }
        state.t = ck
            .get("t")
            .and_then(|r| r.values.first().copied())
            .ok_or_else(|| Error::Checkpoint("optimizer state has no step count `t`".into()))?
            as u64;
        Ok(state)
    }

    pub fn save(&self, path: &Path, store: &ParamStore<T>) -> Result<()> {
        self.to_checkpoint(store, Metadata::new().with("kind", "adam-state"))
            .save(path)
    }
}
