//! Parameter accounting with a per-block breakdown.

use std::fmt;

use crate::autograd::{ParamStore, Role, Variable};
use crate::tensor::Real;

/// Breakdown categories, in report order.
pub const CATEGORIES: [&str; 6] = [
    "trunk convolutions",
    "shortcut projections",
    "batch-norm (scale/shift)",
    "batch-norm (running stats)",
    "ASPP",
    "stream bodies",
];
pub const HEADS: &str = "heads";

/// Counts of one model. Totals include batch-norm running statistics, which
/// are stored per channel like any other tensor but never trained.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamReport {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
    /// Learnable (gradient-updated) entries, frozen or not.
    pub learnable: usize,
    pub running_stats: usize,
    pub per_block: Vec<(String, usize)>,
    /// Convolutions on the main segmentation path and shortcut projections.
    pub trunk_convs: usize,
    pub shortcut_convs: usize,
}

fn category<T: Real>(v: &Variable<T>) -> &'static str {
    let n = v.name.as_str();
    match v.role {
        Role::RunningMean | Role::RunningVar => CATEGORIES[3],
        Role::BnScale | Role::BnShift => CATEGORIES[2],
        _ if n.contains(".aspp.") => CATEGORIES[4],
        _ if n.contains(".shortcut.") => CATEGORIES[1],
        _ if n.contains(".head.") || n.starts_with("fusion.") => HEADS,
        _ if n.contains(".body.") => CATEGORIES[5],
        _ => CATEGORIES[0],
    }
}

pub fn count_parameters<T: Real>(store: &ParamStore<T>) -> ParamReport {
    let mut report = ParamReport::default();
    let mut blocks: Vec<(String, usize)> = CATEGORIES
        .iter()
        .chain(std::iter::once(&HEADS))
        .map(|c| (c.to_string(), 0))
        .collect();
    for (_, v) in store.iter() {
        if !v.role.is_counted() {
            continue;
        }
        let n = v.numel();
        report.total += n;
        if v.trainable {
            report.trainable += n;
        } else {
            report.non_trainable += n;
        }
        if v.role.is_learnable() {
            report.learnable += n;
        } else {
            report.running_stats += n;
        }
        let c = category(v);
        blocks.iter_mut().find(|(name, _)| name == c).unwrap().1 += n;
        if v.role == Role::Weight && v.name.starts_with("seg.") && !v.name.contains(".aspp.") && !v.name.contains(".head.") {
            if v.name.contains(".shortcut.") {
                report.shortcut_convs += 1;
            } else {
                report.trunk_convs += 1;
            }
        }
    }
    blocks.retain(|(_, n)| *n > 0);
    report.per_block = blocks;
    report
}

impl ParamReport {
    pub fn block(&self, name: &str) -> usize {
        self.per_block
            .iter()
            .find(|(n, _)| n == name)
            .map_or(0, |(_, c)| *c)
    }
}

impl fmt::Display for ParamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, n) in &self.per_block {
            writeln!(f, "  {name:<28} {n:>9}")?;
        }
        writeln!(f, "  {:<28} {:>9}", "total", self.total)?;
        writeln!(f, "  {:<28} {:>9}", "trainable", self.trainable)?;
        writeln!(f, "  {:<28} {:>9}", "non-trainable", self.non_trainable)?;
        writeln!(f, "  {:<28} {:>9}", "learnable (incl. frozen)", self.learnable)?;
        if self.trunk_convs > 0 {
            writeln!(
                f,
                "  trunk convolutions: {} on the main path, {} shortcut projections",
                self.trunk_convs, self.shortcut_convs
            )?;
        }
        Ok(())
    }
}
