//! Drives the `hgrnet` binary end to end on a tiny synthetic dataset.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hgrnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgrnet"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn report_params_matches_the_model_builders() {
    let o = hgrnet(&["report-params", "--model-kind", "stage1"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("total") && text(&o).contains("277201"), "{}", text(&o));
    let o = hgrnet(&["report-params", "--model-kind", "stage1-no-aspp"]);
    assert!(text(&o).contains("125457"));
    let o = hgrnet(&["report-params", "--model-kind", "resnet50"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgrnet(&["synth", "--out", p(dir.path()), "--classes", "1"]);
    assert_eq!(code(&o), 1, "{}", text(&o));
    assert_eq!(code(&hgrnet(&["no-such-command"])), 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    let o = hgrnet(&["train-seg", "--config", p(&cfg), "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("learning_rate"));
}

#[test]
fn synth_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = hgrnet(&["--seed", "7", "synth", "--out", p(d.path()), "--per-split", "3,2,2", "--classes", "3", "--size", "64"]);
        assert_eq!(code(&o), 0, "{}", text(&o));
    }
    let img = "train/images/train_00001.png";
    assert!(fs::read(a.path().join(img)).unwrap() == fs::read(b.path().join(img)).unwrap());
    assert_eq!(
        fs::read(a.path().join("train/labels.csv")).unwrap(),
        fs::read(b.path().join("train/labels.csv")).unwrap()
    );
    assert!(a.path().join("manifest.txt").is_file());
}

#[test]
fn shape_stream_without_stage1_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = hgrnet(&["synth", "--out", p(&data), "--per-split", "2,2,0", "--classes", "2", "--size", "128"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = hgrnet(&[
        "train-stream", "--which", "shape", "--data", p(&data), "--out", p(&dir.path().join("run")),
    ]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("train-seg"), "{}", text(&o));
}

#[test]
fn three_step_pipeline_eval_and_infer() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    let o = hgrnet(&["--seed", "3", "synth", "--out", p(&data), "--per-split", "6,4,4", "--classes", "3", "--size", "128"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let cfg = root.join("quick.cfg");
    fs::write(&cfg, "# tiny run\nclasses = 3\nimage_size = 128\nepochs = 1\nbatch_size = 2\n").unwrap();
    let train = |args: &[&str]| {
        let mut full: Vec<&str> = vec!["--threads", "1", "--seed", "5"];
        full.extend_from_slice(args);
        full.extend_from_slice(&["--config", p(&cfg), "--data", p(&data)]);
        let o = hgrnet(&full);
        assert_eq!(code(&o), 0, "{:?}: {}", args, text(&o));
        o
    };
    let seg = root.join("seg");
    train(&["train-seg", "--out", p(&seg)]);
    for f in ["segmentation.ckpt", "segmentation.adam", "segmentation.log", "config.txt", "manifest.txt"] {
        assert!(seg.join(f).is_file(), "{f}");
    }
    let seg_ck = seg.join("segmentation.ckpt");
    let shape = root.join("shape");
    train(&["train-stream", "--which", "shape", "--seg-checkpoint", p(&seg_ck), "--out", p(&shape)]);
    let app = root.join("app");
    train(&["train-stream", "--which", "appearance", "--out", p(&app)]);
    let fused = root.join("fused");
    train(&[
        "train-fuse",
        "--freeze-pre-fc2",
        "--seg-checkpoint",
        p(&seg_ck),
        "--shape-checkpoint",
        p(&shape.join("shape_stream.ckpt")),
        "--appearance-checkpoint",
        p(&app.join("appearance_stream.ckpt")),
        "--out",
        p(&fused),
    ]);
    let manifest = fs::read_to_string(fused.join("manifest.txt")).unwrap();
    // 64×3 classifier weights + 3 biases are the only trainable variables.
    assert!(manifest.contains("trainable_parameters = 195"), "{manifest}");
    let log = fs::read_to_string(fused.join("fusion.log")).unwrap();
    assert!(log.starts_with("epoch 1 loss "), "{log}");

    // Re-running from the echoed configuration reproduces the checkpoint.
    let rerun = root.join("app2");
    let o = hgrnet(&[
        "--threads", "1", "train-stream", "--which", "appearance", "--config", p(&app.join("config.txt")), "--out", p(&rerun),
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(
        fs::read(app.join("appearance_stream.ckpt")).unwrap() == fs::read(rerun.join("appearance_stream.ckpt")).unwrap(),
        "rerun from config.txt produced a different checkpoint"
    );

    let report = root.join("report");
    let o = hgrnet(&[
        "eval", "--model", p(&fused.join("fusion.ckpt")), "--data", p(&data), "--split", "test",
        "--report-dir", p(&report), "--latency-iters", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let kv = fs::read_to_string(report.join("report.kv")).unwrap();
    assert!(kv.contains("model_kind=hgr-net"));
    assert!(report.join("confusion.csv").is_file());
    assert_eq!(fs::read_dir(report.join("masks")).unwrap().count(), 4);

    let out = root.join("infer");
    let image = data.join("test/images/test_00000.png");
    let o = hgrnet(&["infer", "--model", p(&fused.join("fusion.ckpt")), "--image", p(&image), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let probs: Vec<f64> = fs::read_to_string(out.join("prediction.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 3);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    assert!(out.join("map.png").is_file());

    // A segmentation checkpoint cannot be scored as a classifier and vice versa.
    let o = hgrnet(&["eval", "--model", p(&seg_ck), "--data", p(&data), "--split", "test", "--report-dir", p(&report), "--latency-iters", "0"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
}
