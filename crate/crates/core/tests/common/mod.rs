//! Shared test helpers: a central finite-difference gradient oracle and small
//! random-tensor utilities.
#![allow(dead_code)]

pub mod suite;

use hgrnet_core::{Graph, NodeId, ParamId, ParamStore, Result, Role, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: Shape, scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

/// Values bounded away from zero, for inputs that feed kinks (ReLU, max).
pub fn random_away_from_zero(rng: &mut impl Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random::<bool>() { m } else { -m }
    })
}

pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `Σ w·f(inputs)` (random fixed `w`) against
/// central differences. Every input is treated as a trainable variable.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], seed: u64, build: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let mut store = ParamStore::<f64>::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("in{i}"), t.clone(), Role::Weight).unwrap())
        .collect();
    let ids2 = ids.clone();
    check_store(&mut store, &ids, seed, move |g, s| {
        let nodes: Vec<NodeId> = ids2.iter().map(|&id| g.param(s, id)).collect();
        build(g, &nodes)
    })
}

/// Same oracle over an existing store; `build` wires its own graph from it and the
/// variables in `check` are perturbed.
pub fn check_store<F>(
    store: &mut ParamStore<f64>,
    check: &[ParamId],
    seed: u64,
    build: F,
) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let weights = {
        let mut g = Graph::<f64>::with_seed(seed);
        let out = build(&mut g, store)?;
        let mut r = rng(seed ^ 0x5eed);
        random_tensor(&mut r, g.shape(out), 1.0)
    };
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::<f64>::with_seed(seed);
        let out = build(&mut g, store)?;
        let l = g.weighted_sum(out, weights.clone())?;
        g.scalar(l)
    };

    store.zero_grad();
    {
        let mut g = Graph::<f64>::with_seed(seed);
        let out = build(&mut g, store)?;
        let l = g.weighted_sum(out, weights.clone())?;
        g.backward(l, store)?;
    }

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for &id in check {
        let analytic = store.get(id).grad.clone();
        for j in 0..analytic.len() {
            let orig = store.get(id).value.data()[j];
            store.get_mut(id).value.data_mut()[j] = orig + FD_STEP;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig - FD_STEP;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let rel = (analytic.data()[j] - numeric).abs() / numeric.abs().max(1.0);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    Ok(GradReport {
        max_rel_error: max_rel,
        checked,
    })
}
