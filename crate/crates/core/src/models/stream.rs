//! Stage 2: a stream body with a temporary softmax head.

use crate::autograd::{Graph, Mode, NodeId, ParamStore};
use crate::error::{config_err, Result};
use crate::nn::{BodyDropout, Dense, ParamBuilder, StreamBody, FEATURE_DIM};
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StreamKind {
    /// Consumes the one-channel segmentation map.
    Shape,
    /// Consumes the RGB image.
    Appearance,
}

impl StreamKind {
    pub fn in_channels(self) -> usize {
        match self {
            StreamKind::Shape => 1,
            StreamKind::Appearance => 3,
        }
    }

    /// Name prefix shared by the stream checkpoint and the fused network.
    pub fn prefix(self) -> &'static str {
        match self {
            StreamKind::Shape => "shape",
            StreamKind::Appearance => "appearance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "shape" => Ok(StreamKind::Shape),
            "appearance" => Ok(StreamKind::Appearance),
            other => Err(config_err!("unknown stream `{other}` (expected shape or appearance)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StreamClassifier {
    pub kind: StreamKind,
    pub classes: usize,
    pub body: StreamBody,
    pub head: Dense,
}

impl StreamClassifier {
    /// Variables are named `<stream>.body.*` and `<stream>.head.*`.
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, kind: StreamKind, classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(config_err!("a classifier needs at least 2 classes, got {classes}"));
        }
        let mut s = pb.scope(kind.prefix());
        Ok(StreamClassifier {
            kind,
            classes,
            body: StreamBody::new(&mut s, "body", kind.in_channels())?,
            head: Dense::new(&mut s, "head", FEATURE_DIM, classes)?,
        })
    }

    /// Class distribution `N×1×1×C`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        dropout: BodyDropout,
        mode: Mode,
    ) -> Result<NodeId> {
        let f = self.body.forward(g, store, x, dropout, mode)?;
        let z = self.head.forward(g, store, f)?;
        g.softmax(z)
    }
}

impl StreamClassifier {
    /// Shape-stream classification directly from a binary mask, bypassing stage 1.
    /// Non-binary values are accepted with a warning.
    pub fn forward_mask<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        mask: NodeId,
        dropout: BodyDropout,
        mode: Mode,
    ) -> Result<NodeId> {
        if g.value(mask).data().iter().any(|&v| v != T::zero() && v != T::one()) {
            log::warn!("shape-only classifier received a non-binary mask");
        }
        self.forward(g, store, mask, dropout, mode)
    }
}
