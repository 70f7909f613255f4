//! Evaluation of a trained model on a split, and the report formats.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{write_gray_png, DatasetSplit};
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind, ParamReport};
use crate::tensor::Tensor;

use super::latency::{benchmark_latency, LatencyStats, REFERENCE_LATENCY_MS};
use super::metrics::{ConfusionMatrix, PixelCounts};

/// Items per forward pass while evaluating.
const EVAL_CHUNK: usize = 4;

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub warmup: usize,
    /// Timed forward passes per threading mode; 0 skips the latency benchmark.
    pub latency_iters: usize,
    /// Worker counts to benchmark (0 = default pool).
    pub thread_modes: Vec<usize>,
    /// Keep segmentation maps for writing as PNGs.
    pub keep_maps: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            warmup: 2,
            latency_iters: 10,
            thread_modes: vec![1, 0],
            keep_maps: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub kind: ModelKind,
    pub split: String,
    pub samples: usize,
    /// Segmentation models.
    pub pixel: Option<PixelCounts>,
    /// Classifiers.
    pub confusion: Option<ConfusionMatrix>,
    pub params: ParamReport,
    pub model_bytes: usize,
    pub latency: Vec<LatencyStats>,
}

pub struct Evaluation {
    pub report: EvalReport,
    /// `(sample id, probability map)` for models with a segmentation network.
    pub maps: Vec<(String, Tensor<f32>)>,
}

impl Evaluation {
    /// `report.txt`, `report.kv`, `confusion.csv` (classifiers) and `masks/<id>.png`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.report.write(dir)?;
        if !self.maps.is_empty() {
            let masks = dir.join("masks");
            std::fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
            for (id, map) in &self.maps {
                write_gray_png(&masks.join(format!("{id}.png")), map)?;
            }
        }
        Ok(())
    }
}

/// Runs `model` over every sample of `split` in eval mode. Segmentation models
/// are scored by pixel F-score against the masks, classifiers by a confusion
/// matrix against the labels; shape-only classifiers read the masks as input.
pub fn evaluate(model: &Model<f32>, split: &DatasetSplit, opts: &EvalOptions) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::Data(format!("{} split is empty", split.role)));
    }
    let needs_masks = model.kind.is_segmentation() || model.kind == ModelKind::ShapeOnly;
    if needs_masks && split.samples.iter().any(|s| s.mask.is_none()) {
        return Err(Error::Data(format!("{} evaluation needs a mask for every sample", model.kind)));
    }
    if !model.kind.is_segmentation() && split.classes != model.classes {
        return Err(Error::Data(format!(
            "model has {} classes but the split has {}",
            model.classes, split.classes
        )));
    }
    let mut pixel = PixelCounts::default();
    let mut predicted = Vec::with_capacity(split.len());
    let mut maps = Vec::new();
    for chunk in split.samples.chunks(EVAL_CHUNK) {
        let inputs: Vec<&Tensor<f32>> = chunk
            .iter()
            .map(|s| match model.kind {
                ModelKind::ShapeOnly => s.mask.as_ref().expect("checked above"),
                _ => &s.image,
            })
            .collect();
        let x = Tensor::stack(&inputs)?;
        let out = model.predict(&x)?;
        if model.kind.is_segmentation() {
            for (i, s) in chunk.iter().enumerate() {
                pixel.add(out.item(i), s.mask.as_ref().expect("checked above").data(), 0.5);
            }
        } else {
            predicted.extend(out.argmax_per_item());
        }
        if opts.keep_maps {
            let seg = if model.kind.is_segmentation() {
                Some(out)
            } else {
                model.segment(&x)?
            };
            if let Some(seg) = seg {
                for (i, s) in chunk.iter().enumerate() {
                    maps.push((s.id.clone(), seg.slice_items(i, 1)?));
                }
            }
        }
    }
    let confusion = if model.kind.is_segmentation() {
        None
    } else {
        Some(ConfusionMatrix::from_labels(&predicted, &split.labels()?, split.classes)?)
    };
    let side = split.samples[0].image.shape().h;
    let latency = if opts.latency_iters == 0 {
        Vec::new()
    } else {
        opts.thread_modes
            .iter()
            .map(|&t| benchmark_latency(model, model.input_item_shape(side), opts.warmup, opts.latency_iters, t))
            .collect::<Result<_>>()?
    };
    Ok(Evaluation {
        report: EvalReport {
            kind: model.kind,
            split: split.role.to_string(),
            samples: split.len(),
            pixel: model.kind.is_segmentation().then_some(pixel),
            confusion,
            params: model.report(),
            model_bytes: model.serialized_bytes(),
            latency,
        },
        maps,
    })
}

impl EvalReport {
    /// The headline F-score: pixel F for segmentation, macro class F otherwise.
    pub fn f_score(&self) -> f64 {
        match (&self.pixel, &self.confusion) {
            (Some(p), _) => p.f_score(),
            (None, Some(cm)) => cm.macro_f_score(),
            (None, None) => 0.0,
        }
    }

    /// Machine-readable `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("model_kind", self.kind.to_string());
        kv("split", self.split.clone());
        kv("samples", self.samples.to_string());
        kv("f_score", format!("{:.6}", self.f_score()));
        if let Some(p) = &self.pixel {
            kv("pixel_precision", format!("{:.6}", p.precision()));
            kv("pixel_recall", format!("{:.6}", p.recall()));
            kv("pixel_f_score", format!("{:.6}", p.f_score()));
        }
        if let Some(cm) = &self.confusion {
            kv("macro_f_score", format!("{:.6}", cm.macro_f_score()));
            kv("micro_f_score", format!("{:.6}", cm.micro_f_score()));
            kv("accuracy", format!("{:.6}", cm.accuracy()));
            for c in 0..cm.classes() {
                kv(&format!("class{c}_precision"), format!("{:.6}", cm.precision(c)));
                kv(&format!("class{c}_recall"), format!("{:.6}", cm.recall(c)));
                kv(&format!("class{c}_f_score"), format!("{:.6}", cm.class_f_score(c)));
            }
        }
        kv("parameters_total", self.params.total.to_string());
        kv("parameters_trainable", self.params.trainable.to_string());
        kv("parameters_non_trainable", self.params.non_trainable.to_string());
        kv("model_bytes", self.model_bytes.to_string());
        for l in &self.latency {
            let mode = latency_mode(l);
            kv(&format!("latency_{mode}_threads"), l.threads.to_string());
            kv(&format!("latency_{mode}_mean_ms"), format!("{:.3}", l.mean_ms));
            kv(&format!("latency_{mode}_median_ms"), format!("{:.3}", l.median_ms));
            kv(&format!("latency_{mode}_p95_ms"), format!("{:.3}", l.p95_ms));
        }
        kv("latency_reference_ms", format!("{REFERENCE_LATENCY_MS}"));
        out
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model      {}", self.kind);
        let _ = writeln!(out, "split      {} ({} samples)", self.split, self.samples);
        if let Some(p) = &self.pixel {
            let _ = writeln!(
                out,
                "pixel      precision {:.4}  recall {:.4}  F {:.4}",
                p.precision(),
                p.recall(),
                p.f_score()
            );
        }
        if let Some(cm) = &self.confusion {
            let _ = writeln!(out, "\nclass  support  precision  recall  F1");
            for c in 0..cm.classes() {
                let _ = writeln!(
                    out,
                    "{c:>5}  {:>7}  {:>9.4}  {:>6.4}  {:.4}",
                    cm.support(c),
                    cm.precision(c),
                    cm.recall(c),
                    cm.class_f_score(c)
                );
            }
            let _ = writeln!(
                out,
                "\nmacro F {:.4}  micro F (accuracy) {:.4}",
                cm.macro_f_score(),
                cm.micro_f_score()
            );
        }
        let _ = writeln!(
            out,
            "\nparameters {} (trainable {}, non-trainable {})",
            self.params.total, self.params.trainable, self.params.non_trainable
        );
        let _ = writeln!(out, "model size {} bytes", self.model_bytes);
        for l in &self.latency {
            let _ = writeln!(
                out,
                "latency    {} ({} threads, input {}): mean {:.2} ms  median {:.2} ms  p95 {:.2} ms",
                latency_mode(l),
                l.threads,
                l.input,
                l.mean_ms,
                l.median_ms,
                l.p95_ms
            );
        }
        let _ = writeln!(out, "reference  {REFERENCE_LATENCY_MS} ms per frame as published (GPU; context only)");
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("report.txt", self.to_text()),
            ("report.kv", self.to_key_values()),
        ];
        if let Some(cm) = &self.confusion {
            files.push(("confusion.csv", cm.to_csv()));
        }
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn latency_mode(l: &LatencyStats) -> &'static str {
    if l.threads == 1 {
        "single"
    } else {
        "multi"
    }
}
