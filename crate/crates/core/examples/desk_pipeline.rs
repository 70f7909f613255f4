//! Runs the three training steps on a seeded synthetic dataset and prints the
//! epoch logs.
//!
//! `cargo run --release --example desk_pipeline -- [size] [seg_epochs] [stream_epochs] [fusion_epochs]`

use hgrnet_core::data::{generate_synthetic, SynthConfig};
use hgrnet_core::models::{SegConfig, StreamKind};
use hgrnet_core::train::{train_fusion, train_segmentation, train_stream, TrainPlan, TrainStep};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|a| a.parse().ok()).unwrap_or(default)
}

fn main() -> hgrnet_core::Result<()> {
    let (size, e1, e2, e3) = (arg(1, 128), arg(2, 10), arg(3, 20), arg(4, 10));
    let mut cfg = SynthConfig::new([200, 50, 50], 4, 2024);
    cfg.size = size;
    let [train, val, _] = generate_synthetic(&cfg)?;
    let plan = |step, epochs| {
        let mut p = TrainPlan::defaults(step);
        p.epochs = epochs;
        p
    };
    let seg = train_segmentation(&train, &val, SegConfig::default(), plan(TrainStep::Segmentation, e1))?;
    print!("{}", seg.log());
    let seg_ck = seg.checkpoint();
    let shape = train_stream(&train, &val, StreamKind::Shape, Some(&seg_ck), plan(TrainStep::ShapeStream, e2))?;
    print!("{}", shape.log());
    let app = train_stream(&train, &val, StreamKind::Appearance, None, plan(TrainStep::AppearanceStream, e2))?;
    print!("{}", app.log());
    let fused = train_fusion(
        &train,
        &val,
        &seg_ck,
        &shape.checkpoint(),
        &app.checkpoint(),
        plan(TrainStep::Fusion, e3),
    )?;
    print!("{}", fused.log());
    println!(
        "best: seg {:.4} shape {:.4} appearance {:.4} fused {:.4}",
        seg.best.metric, shape.best.metric, app.best.metric, fused.best.metric
    );
    Ok(())
}
