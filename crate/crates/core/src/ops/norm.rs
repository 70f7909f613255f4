//! Batch normalization over (N, H, W) per channel, optionally fused with a ReLU.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::autograd::{Graph, Mode, NodeId, Op, ParamId, ParamStore};
use crate::error::{shape_err, Result};
use crate::tensor::parallel::{for_each_chunk_mut, map_indices};
use crate::tensor::{Real, Tensor};

/// Default running-statistics decay.
pub const BN_MOMENTUM: f64 = 0.99;
/// Default variance floor.
pub const BN_EPSILON: f64 = 1e-3;

/// Pixels per reduction chunk. Fixed so partial sums are combined identically
/// whatever the thread count.
const PIXEL_CHUNK: usize = 4096;

static WARNED_UNTRAINED_EVAL: AtomicBool = AtomicBool::new(false);

/// Variables backing one batch-norm layer.
#[derive(Clone, Debug)]
pub struct BatchNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub updates: ParamId,
    pub momentum: f64,
    pub epsilon: f64,
}

pub(crate) struct BnCache<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
    pub train: bool,
}

pub(crate) struct StatUpdate<T> {
    mean: ParamId,
    var: ParamId,
    updates: ParamId,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
    momentum: f64,
}

impl<T: Real> StatUpdate<T> {
    /// Exponential moving average whose decay warms up as `min(m, (1+t)/(10+t))`
    /// so a short run is not dominated by the initial statistics.
    pub(crate) fn apply(self, store: &mut ParamStore<T>) {
        let t = store.value(self.updates).data()[0].as_f64();
        let decay = T::lit(self.momentum.min((1.0 + t) / (10.0 + t)));
        let keep = T::one() - decay;
        let blend = |dst: &mut Tensor<T>, src: &[T]| {
            dst.data_mut()
                .iter_mut()
                .zip(src)
                .for_each(|(r, &b)| *r = decay * *r + keep * b);
        };
        blend(&mut store.get_mut(self.mean).value, &self.batch_mean);
        blend(&mut store.get_mut(self.var).value, &self.batch_var);
        store.get_mut(self.updates).value.data_mut()[0] = T::lit(t + 1.0);
    }
}

/// Per-channel sums of `f(pixel_value, channel)` over all pixels, accumulated in f64.
fn channel_sums<T: Real>(data: &[T], c: usize, f: impl Fn(T, usize) -> f64 + Sync + Send) -> Vec<f64> {
    let pixels = data.len() / c;
    let chunks = pixels.div_ceil(PIXEL_CHUNK);
    let partials = map_indices(chunks, |k| {
        let start = k * PIXEL_CHUNK * c;
        let end = ((k + 1) * PIXEL_CHUNK * c).min(data.len());
        let mut acc = vec![0.0f64; c];
        for px in data[start..end].chunks_exact(c) {
            for (ch, (a, &v)) in acc.iter_mut().zip(px).enumerate() {
                *a += f(v, ch);
            }
        }
        acc
    });
    let mut total = vec![0.0f64; c];
    for p in partials {
        total.iter_mut().zip(&p).for_each(|(t, v)| *t += v);
    }
    total
}

fn channel_sums2<T: Real>(a: &[T], b: &[T], c: usize, f: impl Fn(T, T, usize) -> (f64, f64) + Sync + Send) -> (Vec<f64>, Vec<f64>) {
    let pixels = a.len() / c;
    let chunks = pixels.div_ceil(PIXEL_CHUNK);
    let partials = map_indices(chunks, |k| {
        let start = k * PIXEL_CHUNK * c;
        let end = ((k + 1) * PIXEL_CHUNK * c).min(a.len());
        let mut s1 = vec![0.0f64; c];
        let mut s2 = vec![0.0f64; c];
        for (pa, pb) in a[start..end].chunks_exact(c).zip(b[start..end].chunks_exact(c)) {
            for ch in 0..c {
                let (u, v) = f(pa[ch], pb[ch], ch);
                s1[ch] += u;
                s2[ch] += v;
            }
        }
        (s1, s2)
    });
    let mut t1 = vec![0.0f64; c];
    let mut t2 = vec![0.0f64; c];
    for (p1, p2) in partials {
        t1.iter_mut().zip(&p1).for_each(|(t, v)| *t += v);
        t2.iter_mut().zip(&p2).for_each(|(t, v)| *t += v);
    }
    (t1, t2)
}

fn elementwise_chunk(c: usize) -> usize {
    PIXEL_CHUNK * c
}

/// Forward pass. Returns the output, the cache for backward, and (train mode)
/// the batch mean and biased variance.
#[allow(clippy::type_complexity)]
pub(crate) fn forward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: Option<(&Tensor<T>, &Tensor<T>)>,
    epsilon: f64,
    relu: bool,
) -> Result<(Tensor<T>, BnCache<T>, Option<(Vec<T>, Vec<T>)>)> {
    let s = input.shape();
    let c = s.c;
    if gamma.len() != c || beta.len() != c {
        return Err(shape_err!(
            "batch norm over {c} channels given gamma/beta of length {}/{}",
            gamma.len(),
            beta.len()
        ));
    }
    let (mean, inv_std, batch_stats) = match running {
        Some((rm, rv)) => {
            let inv: Vec<T> = rv
                .data()
                .iter()
                .map(|&v| T::one() / (v + T::lit(epsilon)).sqrt())
                .collect();
            (rm.data().to_vec(), inv, None)
        }
        None => {
            let m = (s.numel() / c.max(1)) as f64;
            if m == 0.0 {
                return Err(shape_err!("batch norm on empty input {s}"));
            }
            let mean: Vec<f64> = channel_sums(input.data(), c, |v, _| v.as_f64())
                .into_iter()
                .map(|v| v / m)
                .collect();
            let var: Vec<f64> = channel_sums(input.data(), c, |v, ch| {
                let d = v.as_f64() - mean[ch];
                d * d
            })
            .into_iter()
            .map(|v| v / m)
            .collect();
            let inv: Vec<T> = var.iter().map(|&v| T::lit(1.0 / (v + epsilon).sqrt())).collect();
            let mean_t: Vec<T> = mean.iter().map(|&v| T::lit(v)).collect();
            let var_t: Vec<T> = var.iter().map(|&v| T::lit(v)).collect();
            (mean_t.clone(), inv, Some((mean_t, var_t)))
        }
    };
    let (g, b) = (gamma.data(), beta.data());
    let mut out = Tensor::zeros(s);
    let chunk = elementwise_chunk(c);
    for_each_chunk_mut(out.data_mut(), chunk, |k, o| {
        let x = &input.data()[k * chunk..][..o.len()];
        for (po, px) in o.chunks_exact_mut(c).zip(x.chunks_exact(c)) {
            for ch in 0..c {
                let mut y = g[ch] * (px[ch] - mean[ch]) * inv_std[ch] + b[ch];
                if relu && y < T::zero() {
                    y = T::zero();
                }
                po[ch] = y;
            }
        }
    });
    let cache = BnCache {
        mean,
        inv_std,
        train: batch_stats.is_some(),
    };
    Ok((out, cache, batch_stats))
}

pub(crate) struct BnGrads<T: Real> {
    pub input: Option<Tensor<T>>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

pub(crate) fn backward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    output: &Tensor<T>,
    cache: &BnCache<T>,
    relu: bool,
    grad_out: &Tensor<T>,
    want_input: bool,
) -> BnGrads<T> {
    let s = input.shape();
    let c = s.c;
    let (mean, inv_std) = (&cache.mean, &cache.inv_std);
    let mut dy = grad_out.clone();
    if relu {
        dy.data_mut()
            .iter_mut()
            .zip(output.data())
            .for_each(|(g, &o)| {
                if o <= T::zero() {
                    *g = T::zero()
                }
            });
    }
    let (dbeta, dgamma) = channel_sums2(dy.data(), input.data(), c, |g, x, ch| {
        let xhat = ((x - mean[ch]) * inv_std[ch]).as_f64();
        (g.as_f64(), g.as_f64() * xhat)
    });
    let input_grad = want_input.then(|| {
        let m = T::from_usize(s.numel() / c).unwrap();
        let gd = gamma.data();
        let db: Vec<T> = dbeta.iter().map(|&v| T::lit(v)).collect();
        let dg: Vec<T> = dgamma.iter().map(|&v| T::lit(v)).collect();
        let train = cache.train;
        let chunk = elementwise_chunk(c);
        let mut dx = dy;
        for_each_chunk_mut(dx.data_mut(), chunk, |k, d| {
            let x = &input.data()[k * chunk..][..d.len()];
            for (pd, px) in d.chunks_exact_mut(c).zip(x.chunks_exact(c)) {
                for ch in 0..c {
                    pd[ch] = if train {
                        let xhat = (px[ch] - mean[ch]) * inv_std[ch];
                        gd[ch] * inv_std[ch] / m * (m * pd[ch] - db[ch] - xhat * dg[ch])
                    } else {
                        gd[ch] * inv_std[ch] * pd[ch]
                    };
                }
            }
        });
        dx
    });
    let to_tensor = |v: Vec<f64>| {
        Tensor::from_vec(gamma.shape(), v.into_iter().map(T::lit).collect()).expect("per-channel")
    };
    BnGrads {
        input: input_grad,
        gamma: to_tensor(dgamma),
        beta: to_tensor(dbeta),
    }
}

impl<T: Real> Graph<T> {
    /// Batch normalization. Train mode normalizes with batch statistics and queues a
    /// running-statistics update (see [`Graph::commit_stats`]); eval mode uses the
    /// running statistics.
    pub fn batch_norm(
        &mut self,
        store: &ParamStore<T>,
        input: NodeId,
        bn: &BatchNormParams,
        mode: Mode,
    ) -> Result<NodeId> {
        self.batch_norm_impl(store, input, bn, mode, false)
    }

    /// `relu(batch_norm(x))` as one node; stores one activation instead of two.
    pub fn bn_relu(
        &mut self,
        store: &ParamStore<T>,
        input: NodeId,
        bn: &BatchNormParams,
        mode: Mode,
    ) -> Result<NodeId> {
        self.batch_norm_impl(store, input, bn, mode, true)
    }

    fn batch_norm_impl(
        &mut self,
        store: &ParamStore<T>,
        input: NodeId,
        bn: &BatchNormParams,
        mode: Mode,
        relu: bool,
    ) -> Result<NodeId> {
        let gamma = self.param(store, bn.gamma);
        let beta = self.param(store, bn.beta);
        let running = match mode {
            Mode::Train => None,
            Mode::Eval => {
                if store.value(bn.updates).data()[0] == T::zero()
                    && !WARNED_UNTRAINED_EVAL.swap(true, Ordering::Relaxed)
                {
                    log::warn!(
                        "batch norm `{}` evaluated before any training batch; using initial statistics",
                        store.get(bn.gamma).name
                    );
                }
                Some((store.value(bn.running_mean), store.value(bn.running_var)))
            }
        };
        let (out, cache, batch_stats) = forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running,
            bn.epsilon,
            relu,
        )?;
        if let Some((batch_mean, batch_var)) = batch_stats {
            self.stat_updates.push(StatUpdate {
                mean: bn.running_mean,
                var: bn.running_var,
                updates: bn.updates,
                batch_mean,
                batch_var,
                momentum: bn.momentum,
            });
        }
        let rg = self.any_grad(&[input, gamma, beta]);
        Ok(self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                cache,
                relu,
            },
            rg,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::full(Shape::vector(1, c), 1.0)
    }

    fn zeros(c: usize) -> Tensor<f64> {
        Tensor::zeros(Shape::vector(1, c))
    }

    #[test]
    fn two_point_batch() {
        let x = Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![0.0, 2.0]).unwrap();
        let (y, _, stats) = forward(&x, &ones(1), &zeros(1), None, 1e-3, false).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-3).sqrt();
        assert!((y.data()[0] + expect).abs() < 1e-12);
        assert!((y.data()[1] - expect).abs() < 1e-12);
        let (m, v) = stats.unwrap();
        assert_eq!((m[0], v[0]), (1.0, 1.0));
    }

    #[test]
    fn constant_batch_maps_to_beta() {
        let x = Tensor::full(Shape::new(3, 2, 2, 2), 4.2);
        let beta = Tensor::from_vec(Shape::vector(1, 2), vec![0.5, -1.5]).unwrap();
        let (y, _, _) = forward(&x, &ones(2), &beta, None, 1e-3, false).unwrap();
        for px in y.data().chunks(2) {
            assert!((px[0] - 0.5).abs() < 1e-12 && (px[1] + 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_batch_is_nearly_unchanged() {
        // ±1 alternating: mean 0, variance 1
        let x = Tensor::from_fn(Shape::new(4, 2, 2, 1), |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let (y, _, _) = forward(&x, &ones(1), &zeros(1), None, 1e-3, false).unwrap();
        let scale = 1.0 / (1.0f64 + 1e-3).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * scale).abs() < 1e-12);
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn running_statistics_warm_up() {
        let mut store = ParamStore::<f64>::new();
        use crate::autograd::Role;
        let bn = BatchNormParams {
            gamma: store.add("g", ones(1), Role::BnScale).unwrap(),
            beta: store.add("b", zeros(1), Role::BnShift).unwrap(),
            running_mean: store.add("m", zeros(1), Role::RunningMean).unwrap(),
            running_var: store.add("v", ones(1), Role::RunningVar).unwrap(),
            updates: store.add("t", Tensor::scalar(0.0), Role::UpdateCount).unwrap(),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        };
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::from_vec(Shape::new(2, 1, 1, 1), vec![3.0, 5.0]).unwrap());
        g.batch_norm(&store, x, &bn, Mode::Train).unwrap();
        g.commit_stats(&mut store);
        // first update decays by 1/10
        assert!((store.value(bn.running_mean).data()[0] - 3.6).abs() < 1e-12);
        assert!((store.value(bn.running_var).data()[0] - 1.0).abs() < 1e-12);
        assert_eq!(store.value(bn.updates).data()[0], 1.0);
    }
}
