use super::*;
use crate::data::{generate_synthetic, SynthConfig};

fn tiny() -> [DatasetSplit; 3] {
    let mut cfg = SynthConfig::new([6, 4, 4], 3, 11);
    cfg.size = 128;
    generate_synthetic(&cfg).unwrap()
}

fn quick(step: TrainStep) -> TrainPlan {
    let mut p = TrainPlan::defaults(step);
    p.epochs = 1;
    p.batch_size = 2;
    p
}

#[test]
fn shape_stream_without_stage1_is_refused() {
    let [train, val, _] = tiny();
    let err = Session::stream(&train, &val, StreamKind::Shape, None, quick(TrainStep::ShapeStream))
        .err()
        .unwrap();
    assert!(matches!(err, Error::MissingPrerequisite(ref m) if m.contains("train-seg")), "{err}");
}

#[test]
fn appearance_stream_rejects_a_segmentation_checkpoint() {
    let [train, val, _] = tiny();
    let seg: Model<f32> = Model::build(ModelKind::Stage1, 2, 0).unwrap();
    let ck = seg.checkpoint(&Metadata::new());
    let err = Session::stream(&train, &val, StreamKind::Appearance, Some(&ck), quick(TrainStep::AppearanceStream))
        .err()
        .unwrap();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn segmentation_needs_masks() {
    let [mut train, val, _] = tiny();
    train.samples[2].mask = None;
    let r = Session::segmentation(&train, &val, ModelKind::Stage1, SegConfig::default(), quick(TrainStep::Segmentation));
    assert!(matches!(r.err(), Some(Error::Data(_))));
}

#[test]
fn appearance_epoch_logs_and_records() {
    let [train, val, _] = tiny();
    let out = train_stream(&train, &val, StreamKind::Appearance, None, quick(TrainStep::AppearanceStream)).unwrap();
    assert_eq!(out.records.len(), 1);
    assert_eq!(out.best_epoch, 1);
    let line = out.log();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[0], "epoch");
    assert_eq!(fields[2], "loss");
    assert_eq!(fields[4], "val");
    assert_eq!(fields[6], "seconds");
    assert!(fields[3].parse::<f64>().unwrap().is_finite());
    let meta = out.metadata();
    assert_eq!(meta.get("step"), Some("appearance_stream"));
    assert!(meta.get("seconds").is_none());
    assert!(out.records[0].validation.accuracy.is_some());
}

#[test]
fn overfit_reduces_classifier_loss() {
    let [train, val, _] = tiny();
    let mut s = Session::stream(&train, &val, StreamKind::Appearance, None, quick(TrainStep::AppearanceStream)).unwrap();
    let losses = s.overfit(30).unwrap();
    assert!(losses[29] < losses[0], "{losses:?}");
}

#[test]
fn non_finite_loss_is_a_numeric_error_naming_samples() {
    let [train, val, _] = tiny();
    let mut s = Session::stream(&train, &val, StreamKind::Appearance, None, quick(TrainStep::AppearanceStream)).unwrap();
    for v in s.model.store.iter_mut() {
        if v.name.ends_with("head.weight") {
            v.value.fill(f32::NAN);
        }
    }
    let err = s.fit().err().unwrap();
    assert!(matches!(err, Error::Numeric(ref m) if m.contains("train_")), "{err}");
}
