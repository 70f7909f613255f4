//! Composite blocks: layers, residual units and groups, ASPP, and the stream body.

mod aspp;
mod init;
mod layers;
mod residual;
mod stream;

pub use aspp::{Aspp, ASPP_FILTERS, ASPP_RATES};
pub use init::{init_rng, ParamBuilder};
pub use layers::{Conv2d, Dense};
pub use residual::{ResGroup, ResidualUnit, ResidualUnitSpec, ShortcutPolicy, UNITS_PER_GROUP};
pub use stream::{BodyDropout, StreamBody, FEATURE_DIM, POOL_SIZE, POOL_STRIDE, STREAM_CONV_WIDTHS};

#[cfg(test)]
mod tests;
