//! Wall-clock inference latency.

use std::time::Instant;

use crate::error::{config_err, Result};
use crate::models::Model;
use crate::tensor::parallel::{current_threads, with_threads};
use crate::tensor::{Real, Shape, Tensor};

/// Latency of a published implementation on a GPU, shown for context only.
pub const REFERENCE_LATENCY_MS: f64 = 23.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyStats {
    pub threads: usize,
    pub input: Shape,
    pub timings_ms: Vec<f64>,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_timings(threads: usize, input: Shape, timings_ms: Vec<f64>) -> Self {
        let mut sorted = timings_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mean_ms = sorted.iter().sum::<f64>() / n.max(1) as f64;
        let median_ms = if n == 0 {
            0.0
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let p95_ms = if n == 0 {
            0.0
        } else {
            sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]
        };
        LatencyStats {
            threads,
            input,
            timings_ms,
            mean_ms,
            median_ms,
            p95_ms,
        }
    }
}

/// Times `iters` eval-mode forward passes after `warmup` untimed ones, on a
/// pool of `threads` workers (0 = default pool).
pub fn benchmark_latency<T: Real>(
    model: &Model<T>,
    input: Shape,
    warmup: usize,
    iters: usize,
    threads: usize,
) -> Result<LatencyStats> {
    if warmup == 0 || iters == 0 {
        return Err(config_err!("latency benchmark needs warmup ≥ 1 and iters ≥ 1"));
    }
    let x = Tensor::from_fn(input, |i| T::lit(((i * 2_654_435_761) % 1000) as f64 / 1000.0));
    with_threads(threads, || {
        for _ in 0..warmup {
            model.predict(&x)?;
        }
        let mut timings = Vec::with_capacity(iters);
        for _ in 0..iters {
            let start = Instant::now();
            model.predict(&x)?;
            timings.push(start.elapsed().as_secs_f64() * 1e3);
        }
        Ok(LatencyStats::from_timings(current_threads(), input, timings))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        let s = LatencyStats::from_timings(1, Shape::scalar(), vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.mean_ms, 2.5);
        assert_eq!(s.median_ms, 2.5);
        assert_eq!(s.p95_ms, 4.0);
        let odd = LatencyStats::from_timings(1, Shape::scalar(), vec![5.0, 1.0, 3.0]);
        assert_eq!(odd.median_ms, 3.0);
    }
}
