//! The fused two-stage network: segmentation, two stream bodies, sum fusion and
//! a softmax classifier.

use crate::autograd::{Graph, Mode, NodeId, ParamStore};
use crate::error::{config_err, shape_err, Result};
use crate::nn::{BodyDropout, Dense, ParamBuilder, StreamBody, FEATURE_DIM};
use crate::tensor::Real;

use super::segmentation::{SegConfig, SegmentationNet};
use super::stream::StreamKind;

pub const SEG_PREFIX: &str = "seg";
pub const CLASSIFIER_PREFIX: &str = "fusion";

/// Dropout rates used by the fused network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionDropout {
    pub appearance_fc2: f64,
    pub shape_fc2: f64,
    pub after_fusion: f64,
    pub body: BodyDropout,
}

impl Default for FusionDropout {
    fn default() -> Self {
        FusionDropout {
            appearance_fc2: 0.75,
            shape_fc2: 0.45,
            after_fusion: 0.45,
            body: BodyDropout::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HgrNet {
    pub classes: usize,
    pub seg: SegmentationNet,
    pub shape: StreamBody,
    pub appearance: StreamBody,
    pub classifier: Dense,
}

/// Element-wise sum of the two fc2 feature vectors.
pub fn fuse<T: Real>(g: &mut Graph<T>, shape_features: NodeId, appearance_features: NodeId) -> Result<NodeId> {
    g.add(shape_features, appearance_features)
}

impl HgrNet {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, classes: usize, seg: SegConfig) -> Result<Self> {
        if classes < 2 {
            return Err(config_err!("a classifier needs at least 2 classes, got {classes}"));
        }
        let seg = SegmentationNet::new(pb, SEG_PREFIX, seg)?;
        let shape = StreamBody::new(&mut pb.scope(StreamKind::Shape.prefix()), "body", 1)?;
        let appearance = StreamBody::new(&mut pb.scope(StreamKind::Appearance.prefix()), "body", 3)?;
        let classifier = Dense::new(&mut pb.scope(CLASSIFIER_PREFIX), "classifier", FEATURE_DIM, classes)?;
        Ok(HgrNet {
            classes,
            seg,
            shape,
            appearance,
            classifier,
        })
    }

    /// Marks the segmentation variables non-trainable.
    pub fn freeze_segmentation<T: Real>(&self, store: &mut ParamStore<T>) {
        store.set_trainable_prefix(&format!("{SEG_PREFIX}."), false);
    }

    /// Leaves only the classifier after the fusion trainable.
    pub fn freeze_pre_fc2<T: Real>(&self, store: &mut ParamStore<T>) {
        store.set_all_trainable(false);
        store.set_trainable_prefix(&format!("{CLASSIFIER_PREFIX}."), true);
    }

    /// Class distribution from an RGB batch. The segmentation network always runs
    /// in eval mode: its weights and statistics are fixed after stage 1.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        dropout: FusionDropout,
        mode: Mode,
    ) -> Result<NodeId> {
        let map = self.seg.forward(g, store, x, 0.0, Mode::Eval)?;
        self.forward_from_maps(g, store, x, map, dropout, mode)
    }

    /// Class distribution given precomputed segmentation maps.
    pub fn forward_from_maps<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        map: NodeId,
        dropout: FusionDropout,
        mode: Mode,
    ) -> Result<NodeId> {
        let (xs, ms) = (g.shape(x), g.shape(map));
        if xs.n != ms.n || xs.h != ms.h || xs.w != ms.w {
            return Err(shape_err!("image batch {xs} and segmentation maps {ms} disagree"));
        }
        let fs = self.shape.forward(g, store, map, dropout.body, mode)?;
        let fs = g.dropout(fs, dropout.shape_fc2, mode)?;
        let fa = self.appearance.forward(g, store, x, dropout.body, mode)?;
        let fa = g.dropout(fa, dropout.appearance_fc2, mode)?;
        let f = fuse(g, fs, fa)?;
        let f = g.dropout(f, dropout.after_fusion, mode)?;
        let z = self.classifier.forward(g, store, f)?;
        g.softmax(z)
    }
}
