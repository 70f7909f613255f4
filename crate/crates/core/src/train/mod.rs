//! The three-step training procedure: segmentation, single streams, fusion.
//!
//! Segmentation weights are fixed after step 1. Steps 2 and 3 compute each
//! image's segmentation map once and apply the sampled augmentation to the
//! image and its map together; `exact_maps` instead re-runs the frozen network
//! on every augmented image.

mod adam;
mod plan;

pub use adam::{AdamConfig, AdamState};
pub use plan::{DropoutPlan, TrainPlan, TrainStep};

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{apply_transform, augment_pair, sample_transform, Fill, Interp};
use crate::autograd::{Graph, Mode, NodeId};
use crate::data::{one_hot, DatasetSplit};
use crate::error::{config_err, Error, Result};
use crate::eval::{ConfusionMatrix, PixelCounts};
use crate::models::{
    seg_config, Checkpoint, Metadata, Model, ModelKind, SegConfig, StreamKind, SEG_PREFIX,
};
use crate::tensor::{Real, Tensor};

/// Items per eval-mode forward pass during validation and map caching.
const EVAL_CHUNK: usize = 4;

/// Validation result after an epoch. `metric` selects the best epoch: pixel
/// F-score for segmentation, macro class F-score for classifiers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    pub metric: f64,
    /// Classifiers only.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub validation: Validation,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        let mut line = format!(
            "epoch {} loss {:.8} val {:.6} seconds {:.3}",
            self.epoch, self.loss, self.validation.metric, self.seconds
        );
        if let Some(acc) = self.validation.accuracy {
            line.push_str(&format!(" accuracy {acc:.6}"));
        }
        line
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub step: TrainStep,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best: Validation,
    /// Weights from the best epoch (first one on ties).
    pub model: Model<f32>,
    /// Optimizer state after the last epoch.
    pub optimizer: AdamState<f32>,
    pub plan: TrainPlan,
}

impl TrainOutcome {
    pub fn log(&self) -> String {
        self.records.iter().map(|r| r.log_line() + "\n").collect()
    }

    /// Step, seed, best epoch and overrides; no timings, so reruns are byte-identical.
    pub fn metadata(&self) -> Metadata {
        let mut m = Metadata::new()
            .with("step", self.step)
            .with("seed", self.plan.seed)
            .with("epochs", self.records.len())
            .with("best_epoch", self.best_epoch)
            .with("best_metric", format!("{:.6}", self.best.metric));
        let overrides = self.plan.overrides();
        if !overrides.is_empty() {
            m.set("overrides", overrides.join(";"));
        }
        m
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.model.checkpoint(&self.metadata())
    }

    /// Writes `<stem>.ckpt`, `<stem>.adam` and `<stem>.log` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.checkpoint().save(&dir.join(format!("{stem}.ckpt")))?;
        self.optimizer
            .save(&dir.join(format!("{stem}.adam")), &self.model.store)?;
        let log = dir.join(format!("{stem}.log"));
        std::fs::write(&log, self.log()).map_err(|e| Error::io(log, e))
    }
}

/// Per-step loss and validation over a fixed pair of splits.
trait Objective {
    fn train_len(&self) -> usize;
    fn sample_id(&self, index: usize) -> &str;
    fn batch_loss(
        &self,
        model: &Model<f32>,
        g: &mut Graph<f32>,
        batch: &[usize],
        plan: &TrainPlan,
        augment: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId>;
    fn validate(&self, model: &Model<f32>) -> Result<Validation>;
}

/// A model prepared for one training step together with its data.
pub struct Session<'a> {
    pub model: Model<f32>,
    pub plan: TrainPlan,
    objective: Box<dyn Objective + 'a>,
}

impl<'a> Session<'a> {
    /// Step 1. The network input size follows the images.
    pub fn segmentation(
        train: &'a DatasetSplit,
        val: &'a DatasetSplit,
        kind: ModelKind,
        mut seg: SegConfig,
        plan: TrainPlan,
    ) -> Result<Self> {
        if !kind.is_segmentation() {
            return Err(config_err!("step 1 trains a segmentation model, not {kind}"));
        }
        check_splits(train, val)?;
        seg.input_size = train.samples[0].image.shape().h;
        for split in [train, val] {
            if split.samples.iter().any(|s| s.mask.is_none()) {
                return Err(Error::Data(format!(
                    "segmentation training needs a mask for every {} sample",
                    split.role
                )));
            }
        }
        let model = Model::build_with(kind, 2, seg, plan.seed)?;
        Ok(Session {
            model,
            plan,
            objective: Box::new(SegObjective { train, val }),
        })
    }

    /// Step 2. The shape stream needs the step-1 checkpoint; the appearance
    /// stream must not be given one.
    pub fn stream(
        train: &'a DatasetSplit,
        val: &'a DatasetSplit,
        which: StreamKind,
        seg_ckpt: Option<&Checkpoint>,
        plan: TrainPlan,
    ) -> Result<Self> {
        check_splits(train, val)?;
        let classes = check_labels(train, val)?;
        let (model, maps) = match (which, seg_ckpt) {
            (StreamKind::Shape, None) => {
                return Err(Error::MissingPrerequisite(
                    "shape-stream training needs the step-1 segmentation checkpoint (run train-seg first)".into(),
                ))
            }
            (StreamKind::Appearance, Some(_)) => {
                return Err(config_err!(
                    "the appearance stream takes RGB input and no segmentation checkpoint"
                ))
            }
            (StreamKind::Shape, Some(ck)) => {
                let mut model =
                    Model::build_with(ModelKind::ShapeStream, classes, seg_config(ck)?, plan.seed)?;
                model.load_prefix(ck, &format!("{SEG_PREFIX}."))?;
                let maps = Maps::compute(&model, train, val, plan.exact_maps)?;
                (model, Some(maps))
            }
            (StreamKind::Appearance, None) => {
                (Model::build(ModelKind::AppearanceStream, classes, plan.seed)?, None)
            }
        };
        Ok(Session {
            model,
            plan,
            objective: Box::new(StreamObjective { train, val, maps }),
        })
    }

    /// Step 3. Loads segmentation, shape-body and appearance-body weights from
    /// the earlier steps; the classifier after the fusion starts fresh.
    pub fn fusion(
        train: &'a DatasetSplit,
        val: &'a DatasetSplit,
        seg_ckpt: &Checkpoint,
        shape_ckpt: &Checkpoint,
        appearance_ckpt: &Checkpoint,
        plan: TrainPlan,
    ) -> Result<Self> {
        check_splits(train, val)?;
        let classes = check_labels(train, val)?;
        for (ck, want) in [
            (shape_ckpt, ModelKind::ShapeStream),
            (appearance_ckpt, ModelKind::AppearanceStream),
        ] {
            let found = ck.meta.require("kind")?;
            if found != want.as_str() {
                return Err(Error::Checkpoint(format!(
                    "expected a {want} checkpoint, got {found}"
                )));
            }
        }
        let mut model = Model::build_with(ModelKind::HgrNet, classes, seg_config(seg_ckpt)?, plan.seed)?;
        model.load_prefix(seg_ckpt, &format!("{SEG_PREFIX}."))?;
        model.load_prefix(shape_ckpt, &format!("{}.body.", StreamKind::Shape.prefix()))?;
        model.load_prefix(appearance_ckpt, &format!("{}.body.", StreamKind::Appearance.prefix()))?;
        let hgr = model.hgr().expect("built as hgr-net").clone();
        hgr.freeze_segmentation(&mut model.store);
        if plan.freeze_pre_fc2 {
            hgr.freeze_pre_fc2(&mut model.store);
        }
        let maps = Maps::compute(&model, train, val, plan.exact_maps)?;
        Ok(Session {
            model,
            plan,
            objective: Box::new(FusionObjective { train, val, maps }),
        })
    }

    /// Runs the planned epochs and keeps the best-validating weights.
    pub fn fit(self) -> Result<TrainOutcome> {
        let Session {
            mut model,
            plan,
            objective,
        } = self;
        let obj = objective.as_ref();
        let mut opt = AdamState::new(&model.store);
        let mut rng = step_rng(&plan);
        let mut order: Vec<usize> = (0..obj.train_len()).collect();
        let mut records = Vec::with_capacity(plan.epochs);
        let mut best: Option<(usize, Validation, crate::autograd::ParamStore<f32>)> = None;
        log::info!("{} plan:\n{}", plan.step, plan.echo());
        for epoch in 1..=plan.epochs {
            let start = Instant::now();
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in order.chunks(plan.batch_size) {
                let loss = train_batch(&mut model, &mut opt, obj, batch, &plan, true, &mut rng, epoch)?;
                total += loss * batch.len() as f64;
            }
            let validation = obj.validate(&model)?;
            let record = EpochRecord {
                epoch,
                loss: total / order.len() as f64,
                validation,
                seconds: start.elapsed().as_secs_f64(),
            };
            log::info!("{} {}", plan.step, record.log_line());
            if best.as_ref().is_none_or(|(_, b, _)| validation.metric > b.metric) {
                best = Some((epoch, validation, model.store.clone()));
            }
            records.push(record);
        }
        let (best_epoch, best_validation, store) = best.expect("at least one epoch");
        model.store = store;
        Ok(TrainOutcome {
            step: plan.step,
            records,
            best_epoch,
            best: best_validation,
            model,
            optimizer: opt,
            plan,
        })
    }

    /// Repeated Adam steps on the first batch with dropout and augmentation off.
    /// Returns the loss before each step.
    pub fn overfit(&mut self, steps: usize) -> Result<Vec<f64>> {
        let mut plan = self.plan.clone();
        plan.dropout = DropoutPlan::zero();
        let batch: Vec<usize> = (0..plan.batch_size.min(self.objective.train_len())).collect();
        let mut opt = AdamState::new(&self.model.store);
        let mut rng = step_rng(&plan);
        (1..=steps)
            .map(|k| {
                train_batch(
                    &mut self.model,
                    &mut opt,
                    self.objective.as_ref(),
                    &batch,
                    &plan,
                    false,
                    &mut rng,
                    k,
                )
            })
            .collect()
    }

    /// One forward and backward pass on the first batch under the plan's
    /// dropout and augmentation, without an optimizer step. Returns the names of
    /// variables that received a nonzero gradient; gradients are then cleared.
    pub fn probe_gradients(&mut self) -> Result<Vec<String>> {
        let batch: Vec<usize> = (0..self.plan.batch_size.min(self.objective.train_len())).collect();
        let mut rng = step_rng(&self.plan);
        let mut g = Graph::with_seed(rng.random());
        let loss = self
            .objective
            .batch_loss(&self.model, &mut g, &batch, &self.plan, true, &mut rng)?;
        g.backward_release(loss, &mut self.model.store)?;
        let names = self.model.store.nonzero_grad_names();
        self.model.store.zero_grad();
        Ok(names)
    }
}

pub fn train_segmentation(train: &DatasetSplit, val: &DatasetSplit, seg: SegConfig, plan: TrainPlan) -> Result<TrainOutcome> {
    let kind = if seg.aspp {
        ModelKind::Stage1
    } else {
        ModelKind::Stage1NoAspp
    };
    Session::segmentation(train, val, kind, seg, plan)?.fit()
}

pub fn train_stream(
    train: &DatasetSplit,
    val: &DatasetSplit,
    which: StreamKind,
    seg_ckpt: Option<&Checkpoint>,
    plan: TrainPlan,
) -> Result<TrainOutcome> {
    Session::stream(train, val, which, seg_ckpt, plan)?.fit()
}

pub fn train_fusion(
    train: &DatasetSplit,
    val: &DatasetSplit,
    seg_ckpt: &Checkpoint,
    shape_ckpt: &Checkpoint,
    appearance_ckpt: &Checkpoint,
    plan: TrainPlan,
) -> Result<TrainOutcome> {
    Session::fusion(train, val, seg_ckpt, shape_ckpt, appearance_ckpt, plan)?.fit()
}

fn step_rng(plan: &TrainPlan) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(plan.step as u64 + 1);
    rng
}

/// Forward, finiteness checks, statistic commit, backward, Adam. Returns the loss.
#[allow(clippy::too_many_arguments)]
fn train_batch(
    model: &mut Model<f32>,
    opt: &mut AdamState<f32>,
    obj: &dyn Objective,
    batch: &[usize],
    plan: &TrainPlan,
    augment: bool,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64> {
    let mut g = Graph::with_seed(rng.random());
    let loss = obj.batch_loss(model, &mut g, batch, plan, augment, rng)?;
    let value = g.scalar(loss)?.as_f64();
    let ids = || batch.iter().map(|&i| obj.sample_id(i)).collect::<Vec<_>>().join(", ");
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "{} epoch {epoch}: loss is {value} on [{}]",
            plan.step,
            ids()
        )));
    }
    g.commit_stats(&mut model.store);
    g.backward_release(loss, &mut model.store)?;
    let bad: Vec<&str> = model
        .store
        .iter()
        .filter(|(_, v)| !v.grad.all_finite() || !v.value.all_finite())
        .map(|(_, v)| v.name.as_str())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Numeric(format!(
            "{} epoch {epoch}: non-finite values or gradients in {} on [{}] (loss {value})",
            plan.step,
            bad.join(", "),
            ids()
        )));
    }
    opt.step(&mut model.store, &plan.adam)?;
    model.store.zero_grad();
    Ok(value)
}

fn check_splits(train: &DatasetSplit, val: &DatasetSplit) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    train.validate()?;
    val.validate()
}

fn check_labels(train: &DatasetSplit, val: &DatasetSplit) -> Result<usize> {
    if train.classes != val.classes {
        return Err(Error::Data(format!(
            "training split has {} classes, validation split {}",
            train.classes, val.classes
        )));
    }
    train.labels()?;
    val.labels()?;
    Ok(train.classes)
}

fn targets(split: &DatasetSplit, batch: &[usize]) -> Result<Tensor<f32>> {
    let rows = batch
        .iter()
        .map(|&i| {
            let s = &split.samples[i];
            let label = s
                .label
                .ok_or_else(|| Error::Data(format!("sample {} has no label", s.id)))?;
            one_hot(label, split.classes)
        })
        .collect::<Result<Vec<_>>>()?;
    Tensor::stack(&rows.iter().collect::<Vec<_>>())
}

fn confusion(probs: &[Tensor<f32>], split: &DatasetSplit) -> Result<Validation> {
    let predicted: Vec<usize> = probs.iter().flat_map(|p| p.argmax_per_item()).collect();
    let cm = ConfusionMatrix::from_labels(&predicted, &split.labels()?, split.classes)?;
    Ok(Validation {
        metric: cm.macro_f_score(),
        accuracy: Some(cm.accuracy()),
    })
}

/// Eval-mode forward over `items` in chunks.
fn eval_chunks(
    items: usize,
    mut f: impl FnMut(&mut Graph<f32>, std::ops::Range<usize>) -> Result<NodeId>,
) -> Result<Vec<Tensor<f32>>> {
    (0..items)
        .step_by(EVAL_CHUNK)
        .map(|start| {
            let mut g = Graph::new();
            let out = f(&mut g, start..(start + EVAL_CHUNK).min(items))?;
            Ok(g.value(out).clone())
        })
        .collect()
}

fn stack_images(split: &DatasetSplit, range: impl IntoIterator<Item = usize>) -> Result<Tensor<f32>> {
    let items: Vec<_> = range.into_iter().map(|i| &split.samples[i].image).collect();
    Tensor::stack(&items)
}

fn stack(tensors: &[Tensor<f32>], range: impl IntoIterator<Item = usize>) -> Result<Tensor<f32>> {
    let items: Vec<_> = range.into_iter().map(|i| &tensors[i]).collect();
    Tensor::stack(&items)
}

/// Applies one sampled transform to an image (bilinear, edge replicate) and
/// its soft segmentation map (bilinear, fill 0).
fn augment_with_map(
    image: &Tensor<f32>,
    map: &Tensor<f32>,
    plan: &TrainPlan,
    rng: &mut ChaCha8Rng,
) -> (Tensor<f32>, Tensor<f32>) {
    let s = image.shape();
    let t = sample_transform(&plan.augment, s.h, s.w, rng);
    (
        apply_transform(image, &t, Interp::Bilinear, Fill::Edge),
        apply_transform(map, &t, Interp::Bilinear, Fill::Value(0.0)),
    )
}

/// Segmentation maps of every training and validation image from the frozen
/// network. Training maps are skipped in exact mode.
struct Maps {
    train: Option<Vec<Tensor<f32>>>,
    val: Vec<Tensor<f32>>,
}

impl Maps {
    fn compute(model: &Model<f32>, train: &DatasetSplit, val: &DatasetSplit, exact: bool) -> Result<Self> {
        let seg = model.segmentation().expect("model embeds a segmentation network");
        let run = |split: &DatasetSplit| -> Result<Vec<Tensor<f32>>> {
            let chunks = eval_chunks(split.len(), |g, r| {
                let x = g.input(stack_images(split, r)?);
                seg.forward(g, &model.store, x, 0.0, Mode::Eval)
            })?;
            let mut maps = Vec::with_capacity(split.len());
            for c in chunks {
                for i in 0..c.shape().n {
                    maps.push(c.slice_items(i, 1)?);
                }
            }
            Ok(maps)
        };
        Ok(Maps {
            train: if exact { None } else { Some(run(train)?) },
            val: run(val)?,
        })
    }
}

struct SegObjective<'a> {
    train: &'a DatasetSplit,
    val: &'a DatasetSplit,
}

impl Objective for SegObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn sample_id(&self, index: usize) -> &str {
        &self.train.samples[index].id
    }

    fn batch_loss(
        &self,
        model: &Model<f32>,
        g: &mut Graph<f32>,
        batch: &[usize],
        plan: &TrainPlan,
        augment: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let mut images = Vec::with_capacity(batch.len());
        let mut masks = Vec::with_capacity(batch.len());
        for &i in batch {
            let s = &self.train.samples[i];
            let mask = s.mask.as_ref().expect("masks checked at construction");
            if augment {
                let (img, m) = augment_pair(&s.image, Some(mask), &plan.augment, rng)?;
                images.push(img);
                masks.push(m.expect("mask given"));
            } else {
                images.push(s.image.clone());
                masks.push(mask.clone());
            }
        }
        let x = g.input(stack(&images, 0..images.len())?);
        let seg = model.segmentation().expect("segmentation model");
        let p = seg.forward(g, &model.store, x, plan.dropout.seg_head, Mode::Train)?;
        g.bce_loss(p, stack(&masks, 0..masks.len())?)
    }

    fn validate(&self, model: &Model<f32>) -> Result<Validation> {
        let seg = model.segmentation().expect("segmentation model");
        let preds = eval_chunks(self.val.len(), |g, r| {
            let x = g.input(stack_images(self.val, r)?);
            seg.forward(g, &model.store, x, 0.0, Mode::Eval)
        })?;
        let mut counts = PixelCounts::default();
        let mut samples = self.val.samples.iter();
        for p in &preds {
            for i in 0..p.shape().n {
                let mask = samples.next().and_then(|s| s.mask.as_ref()).expect("masks checked");
                counts.add(p.item(i), mask.data(), 0.5);
            }
        }
        Ok(Validation {
            metric: counts.f_score(),
            accuracy: None,
        })
    }
}

struct StreamObjective<'a> {
    train: &'a DatasetSplit,
    val: &'a DatasetSplit,
    /// Present for the shape stream.
    maps: Option<Maps>,
}

impl Objective for StreamObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn sample_id(&self, index: usize) -> &str {
        &self.train.samples[index].id
    }

    fn batch_loss(
        &self,
        model: &Model<f32>,
        g: &mut Graph<f32>,
        batch: &[usize],
        plan: &TrainPlan,
        augment: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let classifier = model.classifier().expect("stream model");
        let mut inputs = Vec::with_capacity(batch.len());
        let cached = self.maps.as_ref().and_then(|m| m.train.as_ref());
        for &i in batch {
            let image = &self.train.samples[i].image;
            let item = match (cached, augment) {
                (Some(maps), true) => augment_with_map(image, &maps[i], plan, rng).1,
                (Some(maps), false) => maps[i].clone(),
                (None, true) => augment_pair(image, None, &plan.augment, rng)?.0,
                (None, false) => image.clone(),
            };
            inputs.push(item);
        }
        let mut x = g.input(stack(&inputs, 0..inputs.len())?);
        if self.maps.is_some() && cached.is_none() {
            let seg = model.segmentation().expect("shape-stream model embeds stage 1");
            x = seg.forward(g, &model.store, x, 0.0, Mode::Eval)?;
        }
        let p = classifier.forward(g, &model.store, x, plan.dropout.body, Mode::Train)?;
        g.categorical_ce_loss(p, targets(self.train, batch)?)
    }

    fn validate(&self, model: &Model<f32>) -> Result<Validation> {
        let classifier = model.classifier().expect("stream model");
        let probs = eval_chunks(self.val.len(), |g, r| {
            let x = match &self.maps {
                Some(m) => stack(&m.val, r)?,
                None => stack_images(self.val, r)?,
            };
            let x = g.input(x);
            classifier.forward(g, &model.store, x, Default::default(), Mode::Eval)
        })?;
        confusion(&probs, self.val)
    }
}

struct FusionObjective<'a> {
    train: &'a DatasetSplit,
    val: &'a DatasetSplit,
    maps: Maps,
}

impl Objective for FusionObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn sample_id(&self, index: usize) -> &str {
        &self.train.samples[index].id
    }

    fn batch_loss(
        &self,
        model: &Model<f32>,
        g: &mut Graph<f32>,
        batch: &[usize],
        plan: &TrainPlan,
        augment: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId> {
        let hgr = model.hgr().expect("hgr model");
        let dropout = plan.dropout.fusion();
        let mut images = Vec::with_capacity(batch.len());
        let mut maps = Vec::with_capacity(batch.len());
        for &i in batch {
            let image = &self.train.samples[i].image;
            match (&self.maps.train, augment) {
                (Some(cached), true) => {
                    let (img, map) = augment_with_map(image, &cached[i], plan, rng);
                    images.push(img);
                    maps.push(map);
                }
                (Some(cached), false) => {
                    images.push(image.clone());
                    maps.push(cached[i].clone());
                }
                (None, true) => images.push(augment_pair(image, None, &plan.augment, rng)?.0),
                (None, false) => images.push(image.clone()),
            }
        }
        let x = g.input(stack(&images, 0..images.len())?);
        let p = if maps.is_empty() {
            hgr.forward(g, &model.store, x, dropout, Mode::Train)?
        } else {
            let m = g.input(stack(&maps, 0..maps.len())?);
            hgr.forward_from_maps(g, &model.store, x, m, dropout, Mode::Train)?
        };
        g.categorical_ce_loss(p, targets(self.train, batch)?)
    }

    fn validate(&self, model: &Model<f32>) -> Result<Validation> {
        let hgr = model.hgr().expect("hgr model");
        let probs = eval_chunks(self.val.len(), |g, r| {
            let x = g.input(stack_images(self.val, r.clone())?);
            let m = g.input(stack(&self.maps.val, r)?);
            hgr.forward_from_maps(g, &model.store, x, m, Default::default(), Mode::Eval)
        })?;
        confusion(&probs, self.val)
    }
}

/// Names of variables a step is expected to update, given the model's store.
pub fn expected_trainable(model: &Model<f32>) -> Vec<String> {
    model
        .store
        .iter()
        .filter(|(_, v)| v.trainable)
        .map(|(_, v)| v.name.clone())
        .collect()
}

#[cfg(test)]
mod tests;
