//! Differentiable primitives. Each module holds the raw kernels plus the
//! [`Graph`](crate::autograd::Graph) method that records the op on the tape.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod dropout;
pub mod join;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod upsample;

pub use conv::{ConvSpec, Padding};
pub use norm::BatchNormParams;
