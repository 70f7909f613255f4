//! Reported measurements: F-scores, confusion matrices, reports and latency.

mod latency;
mod metrics;
mod report;

pub use latency::{benchmark_latency, LatencyStats, REFERENCE_LATENCY_MS};
pub use metrics::{f_score, pixel_f_score, ConfusionMatrix, PixelCounts};
pub use report::{evaluate, EvalOptions, EvalReport, Evaluation};
