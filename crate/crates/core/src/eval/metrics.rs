//! F-scores and the confusion matrix.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Foreground confusion counts pooled over every pixel of every item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PixelCounts {
    pub fn add<T: Real>(&mut self, pred: &[T], truth: &[T], threshold: f64) {
        for (&p, &t) in pred.iter().zip(truth) {
            let p = p.as_f64() >= threshold;
            let t = t.as_f64() >= 0.5;
            match (p, t) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => {}
            }
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f_score(&self) -> f64 {
        f_score(self.precision(), self.recall())
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Pixel F-score of a probability map against a binary mask after thresholding.
pub fn pixel_f_score<T: Real>(pred: &Tensor<T>, truth: &Tensor<T>, threshold: f64) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape(format!(
            "prediction {} and mask {} differ",
            pred.shape(),
            truth.shape()
        )));
    }
    let mut c = PixelCounts::default();
    c.add(pred.data(), truth.data(), threshold);
    Ok(c.f_score())
}

/// Rows are target classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    cells: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            cells: vec![0; classes * classes],
        }
    }

    pub fn from_labels(predicted: &[usize], target: &[usize], classes: usize) -> Result<Self> {
        if predicted.len() != target.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} targets",
                predicted.len(),
                target.len()
            )));
        }
        let mut m = Self::new(classes);
        for (&p, &t) in predicted.iter().zip(target) {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, target: usize, predicted: usize) -> Result<()> {
        if target >= self.classes || predicted >= self.classes {
            return Err(Error::Data(format!(
                "label pair (target {target}, predicted {predicted}) outside 0..{}",
                self.classes
            )));
        }
        self.cells[target * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, target: usize, predicted: usize) -> u64 {
        self.cells[target * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    fn predicted_count(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.predicted_count(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.support(class))
    }

    pub fn class_f_score(&self, class: usize) -> f64 {
        f_score(self.precision(class), self.recall(class))
    }

    /// Unweighted mean of per-class F1.
    pub fn macro_f_score(&self) -> f64 {
        if self.classes == 0 {
            return 0.0;
        }
        (0..self.classes).map(|c| self.class_f_score(c)).sum::<f64>() / self.classes as f64
    }

    /// Micro-averaged F1; equals accuracy for single-label data.
    pub fn micro_f_score(&self) -> f64 {
        self.accuracy()
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..self.classes).map(|c| self.get(c, c)).sum(), self.total())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("target\\predicted");
        for p in 0..self.classes {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
        for t in 0..self.classes {
            let _ = write!(s, "{t}");
            for p in 0..self.classes {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }
}
