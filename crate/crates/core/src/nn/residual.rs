//! Pre-activation bottleneck residual units and the groups built from them.

use crate::autograd::{Graph, Mode, NodeId, ParamStore};
use crate::error::{config_err, shape_err, Result};
use crate::nn::{Conv2d, ParamBuilder};
use crate::ops::{BatchNormParams, ConvSpec};
use crate::tensor::{Real, Shape};

/// When a unit gets a 1×1 projection on its shortcut path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ShortcutPolicy {
    /// Only where the residual branch changes stride or width; identity elsewhere.
    OnShapeChange,
    /// Every unit projects. This is the variant whose size matches the published
    /// parameter totals.
    #[default]
    Always,
}

impl ShortcutPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "on-shape-change" => Ok(ShortcutPolicy::OnShapeChange),
            "always" => Ok(ShortcutPolicy::Always),
            other => Err(config_err!(
                "unknown shortcut policy `{other}` (expected on-shape-change or always)"
            )),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ShortcutPolicy::OnShapeChange => "on-shape-change",
            ShortcutPolicy::Always => "always",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResidualUnitSpec {
    pub in_channels: usize,
    pub bottleneck_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ResidualUnitSpec {
    /// Unit whose output width is four times its bottleneck width.
    pub fn new(in_channels: usize, bottleneck_channels: usize, stride: usize) -> Self {
        ResidualUnitSpec {
            in_channels,
            bottleneck_channels,
            out_channels: 4 * bottleneck_channels,
            stride,
        }
    }

    pub fn changes_shape(&self) -> bool {
        self.stride != 1 || self.in_channels != self.out_channels
    }

    pub fn projects(&self, policy: ShortcutPolicy) -> bool {
        policy == ShortcutPolicy::Always || self.changes_shape()
    }
}

/// `y = h(x) + F(x)` where `F` is BN→ReLU→1×1 (strided) → BN→ReLU→3×3 →
/// BN→ReLU→1×1 and `h` is the identity or a strided 1×1 projection of the
/// pre-activated input.
#[derive(Clone, Debug)]
pub struct ResidualUnit {
    pub spec: ResidualUnitSpec,
    pub bn1: BatchNormParams,
    pub reduce: Conv2d,
    pub bn2: BatchNormParams,
    pub conv: Conv2d,
    pub bn3: BatchNormParams,
    pub restore: Conv2d,
    pub shortcut: Option<Conv2d>,
}

impl ResidualUnit {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        spec: ResidualUnitSpec,
        policy: ShortcutPolicy,
    ) -> Result<Self> {
        let mut s = pb.scope(name);
        let (cin, b, cout) = (spec.in_channels, spec.bottleneck_channels, spec.out_channels);
        let strided = ConvSpec::same().with_stride(spec.stride);
        Ok(ResidualUnit {
            spec,
            bn1: s.batch_norm("bn1", cin)?,
            reduce: Conv2d::new(&mut s, "reduce", 1, cin, b, strided, true)?,
            bn2: s.batch_norm("bn2", b)?,
            conv: Conv2d::new(&mut s, "conv", 3, b, b, ConvSpec::same(), true)?,
            bn3: s.batch_norm("bn3", b)?,
            restore: Conv2d::new(&mut s, "restore", 1, b, cout, ConvSpec::same(), true)?,
            shortcut: if spec.projects(policy) {
                Some(Conv2d::new(&mut s, "shortcut", 1, cin, cout, strided, true)?)
            } else {
                None
            },
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let c = g.shape(x).c;
        if c != self.spec.in_channels {
            return Err(shape_err!(
                "residual unit expects {} input channels, got {c}",
                self.spec.in_channels
            ));
        }
        let pre = g.bn_relu(store, x, &self.bn1, mode)?;
        let h = self.reduce.forward(g, store, pre)?;
        let h = g.bn_relu(store, h, &self.bn2, mode)?;
        let h = self.conv.forward(g, store, h)?;
        let h = g.bn_relu(store, h, &self.bn3, mode)?;
        let residual = self.restore.forward(g, store, h)?;
        let shortcut = match &self.shortcut {
            Some(p) => p.forward(g, store, pre)?,
            None => x,
        };
        g.add(shortcut, residual)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.spec.in_channels {
            return Err(shape_err!(
                "residual unit expects {} input channels, got {}",
                self.spec.in_channels,
                input.c
            ));
        }
        let s = self.reduce.output_shape(input)?;
        let s = self.conv.output_shape(s)?;
        self.restore.output_shape(s)
    }

    /// The three convolutions of the residual branch (the shortcut is reported apart).
    pub fn branch_convs(&self) -> [&Conv2d; 3] {
        [&self.reduce, &self.conv, &self.restore]
    }

    pub fn batch_norms(&self) -> [&BatchNormParams; 3] {
        [&self.bn1, &self.bn2, &self.bn3]
    }
}

pub const UNITS_PER_GROUP: usize = 3;

/// Three units; the first carries the group's stride and width change.
#[derive(Clone, Debug)]
pub struct ResGroup {
    pub units: Vec<ResidualUnit>,
}

impl ResGroup {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        in_channels: usize,
        bottleneck_channels: usize,
        stride: usize,
        policy: ShortcutPolicy,
    ) -> Result<Self> {
        let mut s = pb.scope(name);
        let first = ResidualUnitSpec::new(in_channels, bottleneck_channels, stride);
        let rest = ResidualUnitSpec::new(first.out_channels, bottleneck_channels, 1);
        let units = (0..UNITS_PER_GROUP)
            .map(|i| {
                let spec = if i == 0 { first } else { rest };
                ResidualUnit::new(&mut s, &format!("unit{i}"), spec, policy)
            })
            .collect::<Result<_>>()?;
        Ok(ResGroup { units })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        mut x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        for unit in &self.units {
            x = unit.forward(g, store, x, mode)?;
        }
        Ok(x)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        self.units.iter().try_fold(input, |s, u| u.output_shape(s))
    }

    pub fn out_channels(&self) -> usize {
        self.units[0].spec.out_channels
    }
}
