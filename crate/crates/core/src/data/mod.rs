//! Samples, dataset splits, on-disk layout and the synthetic generator.

mod io;
mod synth;

pub use io::{
    load_dataset, load_dataset_sized, read_image, resize_nearest, write_gray_png, write_split, LABELS_HEADER,
};
pub use synth::{generate_synthetic, HandGeometry, SynthConfig, MAX_SYNTH_CLASSES};

use std::collections::HashSet;
use std::fmt;

use crate::error::{config_err, Error, Result};
use crate::tensor::{Shape, Tensor};

/// Side length every image is brought to.
pub const IMAGE_SIZE: usize = 320;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Validation,
    Test,
}

impl SplitRole {
    pub const ALL: [SplitRole; 3] = [SplitRole::Train, SplitRole::Validation, SplitRole::Test];

    /// Directory name under a dataset root.
    pub fn dir(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Validation => "validation",
            SplitRole::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitRole::Train),
            "validation" | "val" => Ok(SplitRole::Validation),
            "test" => Ok(SplitRole::Test),
            other => Err(config_err!("unknown split `{other}` (expected train, validation or test)")),
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir())
    }
}

/// One `(image, mask, label)` triple. Images are `1×H×W×3` in `[0,1]`, masks
/// `1×H×W×1` in `{0,1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Option<Tensor<f32>>,
    pub label: Option<usize>,
}

impl Sample {
    pub fn one_hot(&self, classes: usize) -> Result<Option<Tensor<f32>>> {
        self.label.map(|l| one_hot(l, classes)).transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub role: SplitRole,
    pub classes: usize,
    pub samples: Vec<Sample>,
    /// Where the data came from (a path, or generator and seed).
    pub provenance: String,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks id uniqueness, shapes, binary masks and label range.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Data(format!("duplicate sample id `{}` in {}", s.id, self.role)));
            }
            let is = s.image.shape();
            if is.n != 1 || is.c != 3 {
                return Err(Error::Data(format!("sample `{}`: image shape {is} is not 1×H×W×3", s.id)));
            }
            if let Some(m) = &s.mask {
                if m.shape() != Shape::new(1, is.h, is.w, 1) {
                    return Err(Error::Data(format!(
                        "sample `{}`: mask {} does not match image {is}",
                        s.id,
                        m.shape()
                    )));
                }
                if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data(format!("sample `{}`: mask is not binary", s.id)));
                }
            }
            if let Some(l) = s.label {
                if l >= self.classes {
                    return Err(Error::Data(format!(
                        "sample `{}`: class {l} outside 0..{}",
                        s.id, self.classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        self.samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::Data(format!("sample `{}` has no label", s.id)))
            })
            .collect()
    }
}

/// Standard basis vector `e_index` of length `classes`, as a `1×1×1×C` tensor.
pub fn one_hot(index: usize, classes: usize) -> Result<Tensor<f32>> {
    if index >= classes {
        return Err(Error::Data(format!("class {index} outside 0..{classes}")));
    }
    let mut t = Tensor::zeros(Shape::vector(1, classes));
    t.data_mut()[index] = 1.0;
    Ok(t)
}
