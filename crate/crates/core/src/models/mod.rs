//! The trainable networks, parameter accounting and checkpoints.

mod checkpoint;
mod count;
mod hgr;
mod segmentation;
mod stream;

pub use checkpoint::{Checkpoint, Metadata, Record, FORMAT_VERSION, MAGIC};
pub use count::{count_parameters, ParamReport, CATEGORIES, HEADS};
pub use hgr::{fuse, FusionDropout, HgrNet, CLASSIFIER_PREFIX, SEG_PREFIX};
pub use segmentation::{
    SegConfig, SegmentationNet, GROUP_BOTTLENECKS, GROUP_STRIDES, INPUT_SIZE, STEM_FILTERS,
    UPSAMPLE_FACTOR,
};
pub use stream::{StreamClassifier, StreamKind};

use std::fmt;
use std::path::Path;

use crate::autograd::{Graph, Mode, ParamStore};
use crate::error::{config_err, Error, Result};
use crate::nn::{init_rng, BodyDropout, ParamBuilder};
use crate::tensor::{Real, Shape, Tensor};

pub const DEFAULT_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Stage1,
    Stage1NoAspp,
    /// Frozen stage 1 feeding the shape stream classifier.
    ShapeStream,
    AppearanceStream,
    /// Shape stream classifier on binary masks, no stage 1.
    ShapeOnly,
    HgrNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Stage1,
        ModelKind::Stage1NoAspp,
        ModelKind::ShapeStream,
        ModelKind::AppearanceStream,
        ModelKind::ShapeOnly,
        ModelKind::HgrNet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Stage1 => "stage1",
            ModelKind::Stage1NoAspp => "stage1-no-aspp",
            ModelKind::ShapeStream => "shape-stream",
            ModelKind::AppearanceStream => "appearance-stream",
            ModelKind::ShapeOnly => "shape-only",
            ModelKind::HgrNet => "hgr-net",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.as_str()).collect();
                config_err!("unknown model kind `{s}` (expected one of {})", names.join(", "))
            })
    }

    pub fn is_segmentation(self) -> bool {
        matches!(self, ModelKind::Stage1 | ModelKind::Stage1NoAspp)
    }

    /// Whether the network embeds the stage-1 segmentation network.
    pub fn has_segmentation(self) -> bool {
        !matches!(self, ModelKind::AppearanceStream | ModelKind::ShapeOnly)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub enum Network {
    Segmentation(SegmentationNet),
    Stream {
        seg: Option<SegmentationNet>,
        classifier: StreamClassifier,
    },
    Hgr(HgrNet),
}

/// A network together with its variables.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub kind: ModelKind,
    pub classes: usize,
    pub store: ParamStore<T>,
    pub net: Network,
    segmentation_ready: bool,
}

impl<T: Real> Model<T> {
    /// Default configuration: ASPP per kind, projection shortcuts, 320×320 input.
    pub fn build(kind: ModelKind, classes: usize, seed: u64) -> Result<Self> {
        Self::build_with(kind, classes, SegConfig::default(), seed)
    }

    /// `seg.aspp` is overridden by the kind for the two segmentation kinds.
    pub fn build_with(kind: ModelKind, classes: usize, mut seg: SegConfig, seed: u64) -> Result<Self> {
        match kind {
            ModelKind::Stage1 => seg.aspp = true,
            ModelKind::Stage1NoAspp => seg.aspp = false,
            _ => {}
        }
        let mut store = ParamStore::new();
        let mut rng = init_rng(seed);
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        let net = match kind {
            ModelKind::Stage1 | ModelKind::Stage1NoAspp => {
                Network::Segmentation(SegmentationNet::new(&mut pb, SEG_PREFIX, seg)?)
            }
            ModelKind::ShapeStream => Network::Stream {
                seg: Some(SegmentationNet::new(&mut pb, SEG_PREFIX, seg)?),
                classifier: StreamClassifier::new(&mut pb, StreamKind::Shape, classes)?,
            },
            ModelKind::AppearanceStream => Network::Stream {
                seg: None,
                classifier: StreamClassifier::new(&mut pb, StreamKind::Appearance, classes)?,
            },
            ModelKind::ShapeOnly => Network::Stream {
                seg: None,
                classifier: StreamClassifier::new(&mut pb, StreamKind::Shape, classes)?,
            },
            ModelKind::HgrNet => Network::Hgr(HgrNet::new(&mut pb, classes, seg)?),
        };
        let mut model = Model {
            kind,
            classes,
            store,
            net,
            segmentation_ready: kind.is_segmentation() || !kind.has_segmentation(),
        };
        if kind.has_segmentation() && !kind.is_segmentation() {
            model
                .store
                .set_trainable_prefix(&format!("{SEG_PREFIX}."), false);
        }
        Ok(model)
    }

    pub fn segmentation(&self) -> Option<&SegmentationNet> {
        match &self.net {
            Network::Segmentation(s) => Some(s),
            Network::Stream { seg, .. } => seg.as_ref(),
            Network::Hgr(h) => Some(&h.seg),
        }
    }

    pub fn classifier(&self) -> Option<&StreamClassifier> {
        match &self.net {
            Network::Stream { classifier, .. } => Some(classifier),
            _ => None,
        }
    }

    pub fn hgr(&self) -> Option<&HgrNet> {
        match &self.net {
            Network::Hgr(h) => Some(h),
            _ => None,
        }
    }

    /// Whether stage-1 weights have been supplied (always true for models
    /// without an embedded segmentation network or that are one).
    pub fn segmentation_ready(&self) -> bool {
        self.segmentation_ready
    }

    fn require_segmentation(&self) -> Result<()> {
        if self.segmentation_ready {
            Ok(())
        } else {
            Err(Error::MissingPrerequisite(format!(
                "stage-1 weights required: load a trained stage1 checkpoint into this {} model first",
                self.kind
            )))
        }
    }

    pub fn report(&self) -> ParamReport {
        count_parameters(&self.store)
    }

    pub fn metadata(&self) -> Metadata {
        let mut m = Metadata::new()
            .with("kind", self.kind)
            .with("classes", self.classes)
            .with("dtype", format!("{:?}", T::DTYPE).to_lowercase());
        if let Some(seg) = self.segmentation() {
            m.set("aspp", seg.config.aspp);
            m.set("shortcut", seg.config.shortcut.as_str());
            m.set("input_size", seg.config.input_size);
        }
        m
    }

    /// Checkpoint of every variable (weights, biases, batch-norm state).
    pub fn checkpoint(&self, extra: &Metadata) -> Checkpoint {
        let mut meta = self.metadata();
        for (k, v) in &extra.0 {
            meta.set(k, v);
        }
        Checkpoint::from_store(meta, &self.store, |_| true)
    }

    pub fn save(&self, path: &Path, extra: &Metadata) -> Result<()> {
        self.checkpoint(extra).save(path)
    }

    /// Serialized size in bytes of the full checkpoint.
    pub fn serialized_bytes(&self) -> usize {
        self.checkpoint(&Metadata::new()).encode().len()
    }

    /// Loads the variables under `prefix` from `ck`. Loading the `seg.` prefix
    /// from a segmentation checkpoint satisfies the stage-1 prerequisite.
    pub fn load_prefix(&mut self, ck: &Checkpoint, prefix: &str) -> Result<usize> {
        let n = ck.apply(&mut self.store, prefix)?;
        if self.kind.has_segmentation() && (prefix.is_empty() || prefix == format!("{SEG_PREFIX}.")) {
            match ck.meta.get("kind") {
                Some(k) if ModelKind::parse(k).is_ok_and(ModelKind::has_segmentation) => {
                    self.segmentation_ready = true
                }
                _ => {}
            }
        }
        Ok(n)
    }

    /// Restores a model of the same kind from its own checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let kind = ModelKind::parse(ck.meta.require("kind")?)?;
        let classes = parse_meta(ck, "classes")?;
        let seg = seg_config(ck)?;
        let mut model = Self::build_with(kind, classes, seg, 0)?;
        model.load_prefix(ck, "")?;
        Ok(model)
    }

    /// Eval-mode inference. Segmentation kinds return `N×H×W×1` probability maps;
    /// classifiers return `N×1×1×C` distributions. Shape-only models take masks.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.require_segmentation()?;
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let store = &self.store;
        let out = match &self.net {
            Network::Segmentation(s) => s.forward(&mut g, store, x, 0.0, Mode::Eval)?,
            Network::Stream { seg, classifier } => {
                let x = match seg {
                    Some(s) => s.forward(&mut g, store, x, 0.0, Mode::Eval)?,
                    None => x,
                };
                if self.kind == ModelKind::ShapeOnly {
                    classifier.forward_mask(&mut g, store, x, BodyDropout::default(), Mode::Eval)?
                } else {
                    classifier.forward(&mut g, store, x, BodyDropout::default(), Mode::Eval)?
                }
            }
            Network::Hgr(h) => h.forward(&mut g, store, x, FusionDropout::default(), Mode::Eval)?,
        };
        Ok(g.value(out).clone())
    }

    /// Eval-mode segmentation maps `N×H×W×1` from the embedded (or sole)
    /// segmentation network; `None` for models without one.
    pub fn segment(&self, input: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        let Some(seg) = self.segmentation() else {
            return Ok(None);
        };
        self.require_segmentation()?;
        let mut g = Graph::new();
        let x = g.input(input.clone());
        let out = seg.forward(&mut g, &self.store, x, 0.0, Mode::Eval)?;
        Ok(Some(g.value(out).clone()))
    }

    /// Shape of one input item: RGB, or a one-channel mask for shape-only models.
    pub fn input_item_shape(&self, side: usize) -> Shape {
        let side = self.segmentation().map_or(side, |s| s.config.input_size);
        let channels = if self.kind == ModelKind::ShapeOnly { 1 } else { 3 };
        Shape::new(1, side, side, channels)
    }

    /// Same model with every tensor converted to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            kind: self.kind,
            classes: self.classes,
            store: self.store.cast(),
            net: self.net.clone(),
            segmentation_ready: self.segmentation_ready,
        }
    }
}

/// Segmentation configuration recorded in a checkpoint's metadata; absent keys
/// take their defaults.
pub fn seg_config(ck: &Checkpoint) -> Result<SegConfig> {
    let mut seg = SegConfig::default();
    if let Some(p) = ck.meta.get("shortcut") {
        seg.shortcut = crate::nn::ShortcutPolicy::parse(p)?;
    }
    if ck.meta.get("input_size").is_some() {
        seg.input_size = parse_meta(ck, "input_size")?;
    }
    if ck.meta.get("aspp").is_some() {
        seg.aspp = parse_meta(ck, "aspp")?;
    }
    Ok(seg)
}

fn parse_meta<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    ck.meta
        .require(key)?
        .parse()
        .map_err(|_| Error::Checkpoint(format!("metadata `{key}` is malformed")))
}
