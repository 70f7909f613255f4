//! Flat `key = value` run configuration. Unknown keys are rejected so that a
//! misspelt hyperparameter never silently falls back to its default.

use std::collections::BTreeMap;
use std::path::Path;

use hgrnet_core::train::TrainPlan;
use hgrnet_core::{Error, Result};

/// Keys outside the training plan.
pub const RUN_KEYS: [&str; 9] = [
    "data",
    "classes",
    "image_size",
    "per_split",
    "aspp",
    "seg_checkpoint",
    "shape_checkpoint",
    "appearance_checkpoint",
    "threads",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn known(key: &str) -> bool {
    RUN_KEYS.contains(&key) || TrainPlan::KEYS.contains(&key)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !known(k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: `{k}` given twice", n + 1)));
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Command-line values take precedence over the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        debug_assert!(known(key), "{key}");
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` has an invalid value `{v}`"))),
        }
    }

    /// Applies every training-plan key present in the file.
    pub fn apply_plan(&self, plan: &mut TrainPlan) -> Result<()> {
        for (k, v) in &self.entries {
            if TrainPlan::KEYS.contains(&k.as_str()) {
                plan.set(k, v)?;
            }
        }
        Ok(())
    }

    /// Run keys present in the file, as `key = value` lines.
    pub fn echo_run_keys(&self) -> String {
        self.entries
            .iter()
            .filter(|(k, _)| RUN_KEYS.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
