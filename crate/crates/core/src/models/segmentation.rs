//! Stage 1: the fully convolutional residual segmentation network.

use crate::autograd::{Graph, Mode, NodeId, ParamStore};
use crate::error::{shape_err, Result};
use crate::nn::{Aspp, Conv2d, ParamBuilder, ResGroup, ShortcutPolicy};
use crate::ops::ConvSpec;
use crate::tensor::{Real, Shape};

/// Nominal square input side.
pub const INPUT_SIZE: usize = 320;
pub const STEM_FILTERS: usize = 16;
/// Bottleneck widths of the three residual groups.
pub const GROUP_BOTTLENECKS: [usize; 3] = [8, 16, 32];
pub const GROUP_STRIDES: [usize; 3] = [1, 2, 2];
pub const UPSAMPLE_FACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegConfig {
    pub aspp: bool,
    pub shortcut: ShortcutPolicy,
    /// Required input side. Anything else is rejected rather than resized.
    pub input_size: usize,
}

impl Default for SegConfig {
    fn default() -> Self {
        SegConfig {
            aspp: true,
            shortcut: ShortcutPolicy::Always,
            input_size: INPUT_SIZE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegmentationNet {
    pub config: SegConfig,
    pub stem: Conv2d,
    pub groups: Vec<ResGroup>,
    pub aspp: Option<Aspp>,
    pub head: Conv2d,
}

impl SegmentationNet {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, name: &str, config: SegConfig) -> Result<Self> {
        if !config.input_size.is_multiple_of(UPSAMPLE_FACTOR) || config.input_size == 0 {
            return Err(crate::error::config_err!(
                "segmentation input side {} must be a positive multiple of {UPSAMPLE_FACTOR}",
                config.input_size
            ));
        }
        let mut s = pb.scope(name);
        let stem = Conv2d::new(&mut s, "stem", 3, 3, STEM_FILTERS, ConvSpec::same(), true)?;
        let mut groups = Vec::with_capacity(3);
        let mut cin = STEM_FILTERS;
        for (i, (&b, &stride)) in GROUP_BOTTLENECKS.iter().zip(&GROUP_STRIDES).enumerate() {
            let g = ResGroup::new(&mut s, &format!("group{}", i + 1), cin, b, stride, config.shortcut)?;
            cin = g.out_channels();
            groups.push(g);
        }
        let aspp = if config.aspp {
            let a = Aspp::new(&mut s, "aspp", cin)?;
            cin = a.out_channels();
            Some(a)
        } else {
            None
        };
        let head = Conv2d::new(&mut s, "head", 1, cin, 1, ConvSpec::same(), true)?;
        Ok(SegmentationNet {
            config,
            stem,
            groups,
            aspp,
            head,
        })
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        let side = self.config.input_size;
        if s.h != side || s.w != side || s.c != 3 {
            return Err(shape_err!(
                "segmentation network expects N×{side}×{side}×3 input, got {s}"
            ));
        }
        Ok(())
    }

    /// Foreground probability map, same spatial size as `x`, one channel.
    /// `head_dropout` applies before the final 1×1 convolution.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        head_dropout: f64,
        mode: Mode,
    ) -> Result<NodeId> {
        self.check_input(g.shape(x))?;
        let mut h = self.stem.forward(g, store, x)?;
        for group in &self.groups {
            h = group.forward(g, store, h, mode)?;
        }
        if let Some(aspp) = &self.aspp {
            h = aspp.forward(g, store, h)?;
        }
        let h = g.dropout(h, head_dropout, mode)?;
        let h = self.head.forward(g, store, h)?;
        let h = g.bilinear_upsample(h, UPSAMPLE_FACTOR)?;
        g.sigmoid(h)
    }

    /// Output shape after the stem and each residual group.
    pub fn trace(&self, input: Shape) -> Result<Vec<(String, Shape)>> {
        self.check_input(input)?;
        let mut rows = Vec::new();
        let mut s = self.stem.output_shape(input)?;
        rows.push(("convolution".to_string(), s));
        for (i, group) in self.groups.iter().enumerate() {
            s = group.output_shape(s)?;
            rows.push((format!("ResGroup{}", i + 1), s));
        }
        if let Some(aspp) = &self.aspp {
            s = aspp.output_shape(s)?;
            rows.push(("ASPP".to_string(), s));
        }
        s = self.head.output_shape(s)?;
        rows.push((
            "output".to_string(),
            Shape::new(s.n, s.h * UPSAMPLE_FACTOR, s.w * UPSAMPLE_FACTOR, s.c),
        ));
        Ok(rows)
    }

    /// Convolutions of the main path: the stem plus three per residual unit.
    pub fn trunk_conv_count(&self) -> usize {
        1 + self.groups.iter().map(|g| 3 * g.units.len()).sum::<usize>()
    }

    pub fn shortcut_count(&self) -> usize {
        self.groups
            .iter()
            .flat_map(|g| &g.units)
            .filter(|u| u.shortcut.is_some())
            .count()
    }
}
