//! Reverse-mode differentiation over a recorded tape, and the variables it trains.

mod graph;
mod params;

pub use graph::{Graph, Mode, NodeId};
pub(crate) use graph::Op;
pub use params::{ParamId, ParamStore, Role, Variable};
