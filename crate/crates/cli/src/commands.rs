use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hgrnet_core::data::{
    generate_synthetic, load_dataset_sized, read_image, write_gray_png, write_split, DatasetSplit,
    SplitRole, SynthConfig, IMAGE_SIZE,
};
use hgrnet_core::eval::{evaluate, EvalOptions};
use hgrnet_core::models::{Checkpoint, Model, ModelKind, SegConfig, StreamKind, DEFAULT_CLASSES};
use hgrnet_core::nn::ShortcutPolicy;
use hgrnet_core::tensor::parallel::{current_threads, with_threads};
use hgrnet_core::train::{Session, TrainOutcome, TrainPlan, TrainStep};
use hgrnet_core::{Error, Result};

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "hgrnet", version, about = "Two-stage hand gesture recognition")]
pub struct Cli {
    /// Kernel worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for data generation, initialization, shuffling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Step 1: train the segmentation network.
    TrainSeg(TrainArgs),
    /// Step 2: train the shape or appearance stream.
    TrainStream {
        #[arg(long, value_enum)]
        which: Which,
        #[command(flatten)]
        common: TrainArgs,
    },
    /// Step 3: train the fused network from the three earlier checkpoints.
    TrainFuse {
        /// Train only the classifier after the fusion.
        #[arg(long)]
        freeze_pre_fc2: bool,
        #[command(flatten)]
        common: TrainArgs,
    },
    /// Score a checkpoint on a dataset split and write a report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report_dir: PathBuf,
        /// Timed forward passes per threading mode (0 skips latency).
        #[arg(long, default_value_t = 20)]
        latency_iters: usize,
    },
    /// Run a checkpoint on one PNG image.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the parameter breakdown of an untrained model.
    ReportParams {
        #[arg(long)]
        model_kind: String,
        #[arg(long, default_value_t = DEFAULT_CLASSES)]
        classes: usize,
        #[arg(long, default_value = "always")]
        shortcut: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Which {
    Shape,
    Appearance,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Train, validation and test sizes.
    #[arg(long, default_value = "200,50,50")]
    per_split: String,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = IMAGE_SIZE)]
    size: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset root with train/ and validation/ splits.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seg_checkpoint: Option<PathBuf>,
    #[arg(long)]
    shape_checkpoint: Option<PathBuf>,
    #[arg(long)]
    appearance_checkpoint: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.unwrap_or(0);
    let seed = cli.seed;
    with_threads(threads, move || match cli.command {
        Command::Synth(a) => synth(&a, seed.unwrap_or(7), threads),
        Command::TrainSeg(a) => train(TrainStep::Segmentation, &a, seed, threads),
        Command::TrainStream { which, common } => {
            let step = match which {
                Which::Shape => TrainStep::ShapeStream,
                Which::Appearance => TrainStep::AppearanceStream,
            };
            train(step, &common, seed, threads)
        }
        Command::TrainFuse { freeze_pre_fc2, common } => {
            let mut extra = Vec::new();
            if freeze_pre_fc2 {
                extra.push(("freeze_pre_fc2", "true"));
            }
            train_with(TrainStep::Fusion, &common, seed, threads, &extra)
        }
        Command::Eval {
            model,
            data,
            split,
            report_dir,
            latency_iters,
        } => eval(&model, &data, &split, &report_dir, latency_iters),
        Command::Infer { model, image, out } => infer(&model, &image, &out),
        Command::ReportParams {
            model_kind,
            classes,
            shortcut,
        } => report_params(&model_kind, classes, &shortcut),
    })
}

/// Describes the run directory's contents for later inspection.
fn write_manifest(dir: &Path, command: &str, lines: &[(String, String)]) -> Result<()> {
    let mut text = format!("command = {command}\nversion = {}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in lines {
        let _ = writeln!(text, "{k} = {v}");
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn synth(a: &SynthArgs, seed: u64, threads: usize) -> Result<()> {
    let sizes: Vec<usize> = a
        .per_split
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("--per-split needs three integers, got `{}`", a.per_split)))?;
    let per_split: [usize; 3] = sizes
        .try_into()
        .map_err(|_| Error::Config(format!("--per-split needs three integers, got `{}`", a.per_split)))?;
    let mut cfg = SynthConfig::new(per_split, a.classes, seed);
    cfg.size = a.size;
    let splits = generate_synthetic(&cfg)?;
    for split in &splits {
        if !split.is_empty() {
            write_split(&a.out, split)?;
        }
        println!("{:<10} {} samples", split.role.to_string(), split.len());
    }
    write_manifest(
        &a.out,
        "synth",
        &[
            ("per_split".into(), a.per_split.clone()),
            ("classes".into(), a.classes.to_string()),
            ("image_size".into(), a.size.to_string()),
            ("seed".into(), seed.to_string()),
            ("threads".into(), threads.to_string()),
        ],
    )
}

fn train(step: TrainStep, a: &TrainArgs, seed: Option<u64>, threads: usize) -> Result<()> {
    train_with(step, a, seed, threads, &[])
}

fn load_checkpoint(cfg: &Config, key: &str, step: &str) -> Result<Option<Checkpoint>> {
    match cfg.get(key) {
        None => Ok(None),
        Some(p) => {
            let path = Path::new(p);
            if !path.is_file() {
                return Err(Error::MissingPrerequisite(format!(
                    "{key} {} does not exist (produced by {step})",
                    path.display()
                )));
            }
            Checkpoint::load(path).map(Some)
        }
    }
}

fn require(ck: Option<Checkpoint>, key: &str, step: &str) -> Result<Checkpoint> {
    ck.ok_or_else(|| Error::MissingPrerequisite(format!("--{} is required: run {step} first", key.replace('_', "-"))))
}

fn train_with(step: TrainStep, a: &TrainArgs, seed: Option<u64>, threads: usize, extra: &[(&str, &str)]) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for (key, value) in [
        ("data", &a.data),
        ("seg_checkpoint", &a.seg_checkpoint),
        ("shape_checkpoint", &a.shape_checkpoint),
        ("appearance_checkpoint", &a.appearance_checkpoint),
    ] {
        if let Some(v) = value {
            cfg.set(key, v.display());
        }
    }
    if let Some(s) = seed {
        cfg.set("seed", s);
    }
    for (k, v) in extra {
        cfg.set(k, v);
    }
    let mut plan = TrainPlan::defaults(step);
    cfg.apply_plan(&mut plan)?;
    let data = PathBuf::from(
        cfg.get("data")
            .ok_or_else(|| Error::Config("no dataset: pass --data or set `data` in the config".into()))?,
    );
    let classes = cfg.parsed("classes", DEFAULT_CLASSES)?;
    let size = cfg.parsed("image_size", IMAGE_SIZE)?;
    let load = |role| load_dataset_sized(&data, role, classes, size);
    let (train, val) = (load(SplitRole::Train)?, load(SplitRole::Validation)?);

    let seg_ck = load_checkpoint(&cfg, "seg_checkpoint", "train-seg")?;
    let session = match step {
        TrainStep::Segmentation => {
            let seg = SegConfig {
                aspp: cfg.parsed("aspp", true)?,
                shortcut: ShortcutPolicy::parse(cfg.get("shortcut").unwrap_or("always"))?,
                input_size: size,
            };
            let kind = if seg.aspp { ModelKind::Stage1 } else { ModelKind::Stage1NoAspp };
            Session::segmentation(&train, &val, kind, seg, plan)?
        }
        TrainStep::ShapeStream => Session::stream(&train, &val, StreamKind::Shape, seg_ck.as_ref(), plan)?,
        TrainStep::AppearanceStream => Session::stream(&train, &val, StreamKind::Appearance, seg_ck.as_ref(), plan)?,
        TrainStep::Fusion => {
            let seg = require(seg_ck, "seg_checkpoint", "train-seg")?;
            let shape = require(
                load_checkpoint(&cfg, "shape_checkpoint", "train-stream --which shape")?,
                "shape_checkpoint",
                "train-stream --which shape",
            )?;
            let app = require(
                load_checkpoint(&cfg, "appearance_checkpoint", "train-stream --which appearance")?,
                "appearance_checkpoint",
                "train-stream --which appearance",
            )?;
            Session::fusion(&train, &val, &seg, &shape, &app, plan)?
        }
    };
    let report = session.model.report();
    log::info!(
        "{step}: {} trainable parameters of {} ({} training samples, {} validation)",
        report.trainable,
        report.total,
        train.len(),
        val.len()
    );
    let echo = format!("{}{}", cfg.echo_run_keys(), session.plan.echo());
    let outcome = session.fit()?;
    write_outputs(&a.out, step, &outcome, &echo, &train, &val, threads, report.trainable)
}

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    dir: &Path,
    step: TrainStep,
    outcome: &TrainOutcome,
    echo: &str,
    train: &DatasetSplit,
    val: &DatasetSplit,
    threads: usize,
    trainable: usize,
) -> Result<()> {
    create_dir(dir)?;
    let stem = step.as_str();
    outcome.save(dir, stem)?;
    let echo_path = dir.join("config.txt");
    std::fs::write(&echo_path, echo).map_err(|e| Error::Io {
        path: echo_path,
        source: e,
    })?;
    println!(
        "{step}: best epoch {} of {}, validation {:.4}",
        outcome.best_epoch,
        outcome.records.len(),
        outcome.best.metric
    );
    write_manifest(
        dir,
        &format!("train {stem}"),
        &[
            ("checkpoint".into(), format!("{stem}.ckpt")),
            ("optimizer".into(), format!("{stem}.adam")),
            ("log".into(), format!("{stem}.log")),
            ("config".into(), "config.txt".into()),
            ("train_samples".into(), train.len().to_string()),
            ("validation_samples".into(), val.len().to_string()),
            ("trainable_parameters".into(), trainable.to_string()),
            ("best_epoch".into(), outcome.best_epoch.to_string()),
            ("best_metric".into(), format!("{:.6}", outcome.best.metric)),
            ("threads".into(), if threads == 0 { current_threads() } else { threads }.to_string()),
        ],
    )
}

fn eval(model: &Path, data: &Path, split: &str, report_dir: &Path, latency_iters: usize) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    let model: Model<f32> = Model::from_checkpoint(&ck)?;
    let role = SplitRole::parse(split)?;
    let size = model.segmentation().map_or(IMAGE_SIZE, |s| s.config.input_size);
    let classes = if model.kind.is_segmentation() { DEFAULT_CLASSES } else { model.classes };
    let data = load_dataset_sized(data, role, classes, size)?;
    let opts = EvalOptions {
        latency_iters,
        ..EvalOptions::default()
    };
    let ev = evaluate(&model, &data, &opts)?;
    ev.write(report_dir)?;
    print!("{}", ev.report.to_text());
    Ok(())
}

fn infer(model: &Path, image: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(model)?;
    let model: Model<f32> = Model::from_checkpoint(&ck)?;
    if model.kind == ModelKind::ShapeOnly {
        return Err(Error::Config("shape-only models take masks, not RGB images".into()));
    }
    let size = model.segmentation().map_or(IMAGE_SIZE, |s| s.config.input_size);
    let x = read_image(image, size)?;
    create_dir(out)?;
    let mut text = String::new();
    if model.kind.is_segmentation() {
        let map = model.predict(&x)?;
        let fg = map.data().iter().filter(|&&p| p >= 0.5).count() as f64 / map.len() as f64;
        let _ = writeln!(text, "foreground_fraction {fg:.6}");
        write_gray_png(&out.join("map.png"), &map)?;
    } else {
        let probs = model.predict(&x)?;
        for (c, p) in probs.data().iter().enumerate() {
            let _ = writeln!(text, "{c} {p:.6}");
        }
        if let Some(map) = model.segment(&x)? {
            write_gray_png(&out.join("map.png"), &map)?;
        }
    }
    let path = out.join("prediction.txt");
    std::fs::write(&path, &text).map_err(|e| Error::Io { path, source: e })?;
    print!("{text}");
    Ok(())
}

fn report_params(kind: &str, classes: usize, shortcut: &str) -> Result<()> {
    let kind = ModelKind::parse(kind)?;
    let seg = SegConfig {
        shortcut: ShortcutPolicy::parse(shortcut)?,
        ..SegConfig::default()
    };
    let model: Model<f32> = Model::build_with(kind, classes, seg, 0)?;
    let r = model.report();
    println!("{kind} ({classes} classes, {} shortcuts)", seg.shortcut.as_str());
    print!("{r}");
    println!(
        "  {:<28} {:>9}",
        "running statistics", r.running_stats
    );
    println!("  {:<28} {:>9}", "checkpoint bytes (f32)", model.serialized_bytes());
    Ok(())
}
