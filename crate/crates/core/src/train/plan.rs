//! Hyperparameter bundles for the three training steps.

use std::fmt;

use crate::augment::AugmentProfile;
use crate::error::{config_err, Result};
use crate::models::FusionDropout;
use crate::nn::BodyDropout;

use super::adam::AdamConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainStep {
    Segmentation,
    ShapeStream,
    AppearanceStream,
    Fusion,
}

impl TrainStep {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainStep::Segmentation => "segmentation",
            TrainStep::ShapeStream => "shape_stream",
            TrainStep::AppearanceStream => "appearance_stream",
            TrainStep::Fusion => "fusion",
        }
    }
}

impl fmt::Display for TrainStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every dropout rate a step may use. Unused rates are ignored by that step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutPlan {
    /// Before the segmentation head 1×1 convolution.
    pub seg_head: f64,
    /// Inside the stream bodies (before and after fc1).
    pub body: BodyDropout,
    /// After fc2 of each stream and after the fusion.
    pub appearance_fc2: f64,
    pub shape_fc2: f64,
    pub after_fusion: f64,
}

impl DropoutPlan {
    pub fn zero() -> Self {
        DropoutPlan {
            seg_head: 0.0,
            body: BodyDropout::default(),
            appearance_fc2: 0.0,
            shape_fc2: 0.0,
            after_fusion: 0.0,
        }
    }

    pub fn fusion(&self) -> FusionDropout {
        FusionDropout {
            appearance_fc2: self.appearance_fc2,
            shape_fc2: self.shape_fc2,
            after_fusion: self.after_fusion,
            body: self.body,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainPlan {
    pub step: TrainStep,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout: DropoutPlan,
    pub augment: AugmentProfile,
    /// Step 3 only: train just the classifier after the fusion.
    pub freeze_pre_fc2: bool,
    /// Steps 2–3: run the frozen segmentation network on every augmented batch
    /// instead of transforming cached maps.
    pub exact_maps: bool,
    pub seed: u64,
}

impl TrainPlan {
    /// Defaults: Adam 1e-3/0.9/0.999, 150 epochs, batch 8 for segmentation and 2
    /// otherwise, per-step dropout rates and augmentation profiles.
    pub fn defaults(step: TrainStep) -> Self {
        let mut dropout = DropoutPlan::zero();
        let (batch_size, augment) = match step {
            TrainStep::Segmentation => {
                dropout.seg_head = 0.2;
                (8, AugmentProfile::online_fusion())
            }
            TrainStep::ShapeStream | TrainStep::AppearanceStream => {
                dropout.body = BodyDropout {
                    before_fc1: 0.2,
                    after_fc1: 0.3,
                };
                (2, AugmentProfile::online_stream())
            }
            TrainStep::Fusion => {
                dropout.appearance_fc2 = 0.75;
                dropout.shape_fc2 = 0.45;
                dropout.after_fusion = 0.45;
                (2, AugmentProfile::online_fusion())
            }
        };
        TrainPlan {
            step,
            adam: AdamConfig::default(),
            batch_size,
            epochs: 150,
            dropout,
            augment,
            freeze_pre_fc2: false,
            exact_maps: false,
            seed: 0,
        }
    }

    /// Keys accepted by [`TrainPlan::set`].
    pub const KEYS: [&'static str; 17] = [
        "lr",
        "beta1",
        "beta2",
        "epsilon",
        "batch_size",
        "epochs",
        "dropout_seg_head",
        "dropout_before_fc1",
        "dropout_after_fc1",
        "dropout_appearance_fc2",
        "dropout_shape_fc2",
        "dropout_after_fusion",
        "augment",
        "freeze_pre_fc2",
        "exact_maps",
        "seed",
        "shortcut",
    ];

    /// Overrides one setting from its text form and records the change.
    /// `shortcut` is accepted here for config validation but applied by callers.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| config_err!("`{key}` needs a number, got `{value}`"))
        };
        let count = || -> Result<usize> {
            value
                .parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| config_err!("`{key}` needs a positive integer, got `{value}`"))
        };
        let rate = || -> Result<f64> {
            let r = num()?;
            if (0.0..1.0).contains(&r) {
                Ok(r)
            } else {
                Err(config_err!("`{key}` must be in [0, 1), got {r}"))
            }
        };
        let flag = || -> Result<bool> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(config_err!("`{key}` needs true or false, got `{value}`")),
            }
        };
        match key {
            "lr" => self.adam.lr = num()?,
            "beta1" => self.adam.beta1 = rate()?,
            "beta2" => self.adam.beta2 = rate()?,
            "epsilon" => self.adam.epsilon = num()?,
            "batch_size" => self.batch_size = count()?,
            "epochs" => self.epochs = count()?,
            "dropout_seg_head" => self.dropout.seg_head = rate()?,
            "dropout_before_fc1" => self.dropout.body.before_fc1 = rate()?,
            "dropout_after_fc1" => self.dropout.body.after_fc1 = rate()?,
            "dropout_appearance_fc2" => self.dropout.appearance_fc2 = rate()?,
            "dropout_shape_fc2" => self.dropout.shape_fc2 = rate()?,
            "dropout_after_fusion" => self.dropout.after_fusion = rate()?,
            "augment" => self.augment = AugmentProfile::parse(value)?,
            "freeze_pre_fc2" => self.freeze_pre_fc2 = flag()?,
            "exact_maps" => self.exact_maps = flag()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| config_err!("`seed` needs an unsigned integer, got `{value}`"))?
            }
            "shortcut" => {
                crate::nn::ShortcutPolicy::parse(value)?;
            }
            _ => return Err(config_err!("unknown training setting `{key}`")),
        }
        log::info!("{} plan override: {key} = {value}", self.step);
        Ok(())
    }

    /// `key=value` for every setting that differs from the step's defaults.
    pub fn overrides(&self) -> Vec<String> {
        let defaults = TrainPlan::defaults(self.step).echo();
        let defaults: Vec<&str> = defaults.lines().collect();
        self.echo()
            .lines()
            .filter(|l| !defaults.contains(l))
            .map(|l| l.replace(" = ", "="))
            .collect()
    }

    /// Effective settings as `key = value` lines (re-readable by [`TrainPlan::set`]).
    pub fn echo(&self) -> String {
        let d = &self.dropout;
        format!(
            "lr = {}\nbeta1 = {}\nbeta2 = {}\nepsilon = {}\nbatch_size = {}\nepochs = {}\n\
             dropout_seg_head = {}\ndropout_before_fc1 = {}\ndropout_after_fc1 = {}\n\
             dropout_appearance_fc2 = {}\ndropout_shape_fc2 = {}\ndropout_after_fusion = {}\n\
             augment = {}\nfreeze_pre_fc2 = {}\nexact_maps = {}\nseed = {}\n",
            self.adam.lr,
            self.adam.beta1,
            self.adam.beta2,
            self.adam.epsilon,
            self.batch_size,
            self.epochs,
            d.seg_head,
            d.body.before_fc1,
            d.body.after_fc1,
            d.appearance_fc2,
            d.shape_fc2,
            d.after_fusion,
            self.augment.name(),
            self.freeze_pre_fc2,
            self.exact_maps,
            self.seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_step() {
        let seg = TrainPlan::defaults(TrainStep::Segmentation);
        assert_eq!((seg.batch_size, seg.epochs, seg.dropout.seg_head), (8, 150, 0.2));
        let s = TrainPlan::defaults(TrainStep::ShapeStream);
        assert_eq!(s.batch_size, 2);
        assert_eq!(s.dropout.body, BodyDropout { before_fc1: 0.2, after_fc1: 0.3 });
        assert_eq!(s.augment, AugmentProfile::online_stream());
        let f = TrainPlan::defaults(TrainStep::Fusion);
        assert_eq!((f.dropout.appearance_fc2, f.dropout.shape_fc2, f.dropout.after_fusion), (0.75, 0.45, 0.45));
        assert_eq!(f.dropout.body, BodyDropout::default());
        assert_eq!(f.adam, AdamConfig::default());
    }

    #[test]
    fn overrides_are_recorded_and_validated() {
        let mut p = TrainPlan::defaults(TrainStep::Fusion);
        p.set("epochs", "3").unwrap();
        p.set("freeze_pre_fc2", "true").unwrap();
        p.set("lr", "0.001").unwrap();
        assert_eq!(p.overrides(), vec!["epochs=3", "freeze_pre_fc2=true"]);
        assert!(p.set("dropout_after_fusion", "1.0").is_err());
        assert!(p.set("learning_rate", "0.1").is_err());
        assert!(p.set("batch_size", "0").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut p = TrainPlan::defaults(TrainStep::ShapeStream);
        p.set("lr", "0.0005").unwrap();
        p.set("seed", "17").unwrap();
        let mut q = TrainPlan::defaults(TrainStep::ShapeStream);
        for line in p.echo().lines() {
            let (k, v) = line.split_once(" = ").unwrap();
            q.set(k, v).unwrap();
        }
        assert_eq!(p, q);
    }
}
