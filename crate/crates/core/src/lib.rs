//! Two-stage hand gesture recognition: a residual segmentation network with
//! atrous spatial pyramid pooling, followed by shape and appearance streams fused
//! by element-wise summation, on a self-contained tensor and autodiff engine.

pub mod augment;
pub mod autograd;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod ops;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Mode, NodeId, ParamId, ParamStore, Role, Variable};
pub use error::{Error, Result};
pub use tensor::{DType, Real, Shape, Tensor};
