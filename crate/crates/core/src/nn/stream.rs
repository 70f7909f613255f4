//! The recognition-stage CNN body shared by the shape and appearance streams.

use crate::autograd::{Graph, Mode, NodeId, ParamStore};
use crate::error::{shape_err, Result};
use crate::nn::{Conv2d, Dense, ParamBuilder};
use crate::ops::ConvSpec;
use crate::tensor::{Real, Shape};

pub const STREAM_CONV_WIDTHS: [usize; 4] = [16, 32, 64, 128];
pub const POOL_SIZE: usize = 3;
pub const POOL_STRIDE: usize = 3;
/// Width of fc1 and of the fc2 feature vector.
pub const FEATURE_DIM: usize = 64;

/// Dropout applied inside the body: before fc1 and after fc1.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BodyDropout {
    pub before_fc1: f64,
    pub after_fc1: f64,
}

/// conv(16)→pool→conv(32)→pool→conv(64)→pool→conv(128)→global average pool
/// →fc1(64)→fc2(64). Convolutions are 3×3 valid with bias and ReLU; both dense
/// layers are followed by ReLU.
#[derive(Clone, Debug)]
pub struct StreamBody {
    pub in_channels: usize,
    pub convs: Vec<Conv2d>,
    pub fc1: Dense,
    pub fc2: Dense,
}

impl StreamBody {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, name: &str, in_channels: usize) -> Result<Self> {
        let mut s = pb.scope(name);
        let mut convs = Vec::with_capacity(STREAM_CONV_WIDTHS.len());
        let mut cin = in_channels;
        for (i, &cout) in STREAM_CONV_WIDTHS.iter().enumerate() {
            convs.push(Conv2d::new(&mut s, &format!("conv{}", i + 1), 3, cin, cout, ConvSpec::valid(), true)?);
            cin = cout;
        }
        Ok(StreamBody {
            in_channels,
            convs,
            fc1: Dense::new(&mut s, "fc1", cin, FEATURE_DIM)?,
            fc2: Dense::new(&mut s, "fc2", FEATURE_DIM, FEATURE_DIM)?,
        })
    }

    /// Returns the fc2 feature vector (`N×1×1×64`).
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
        dropout: BodyDropout,
        mode: Mode,
    ) -> Result<NodeId> {
        self.check_input(g.shape(x))?;
        let mut h = x;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            h = conv.forward(g, store, h)?;
            h = g.relu(h)?;
            if i < last {
                h = g.max_pool2d(h, POOL_SIZE, POOL_STRIDE)?;
            }
        }
        let h = g.global_avg_pool(h)?;
        let h = g.dropout(h, dropout.before_fc1, mode)?;
        let h = self.fc1.forward(g, store, h)?;
        let h = g.relu(h)?;
        let h = g.dropout(h, dropout.after_fc1, mode)?;
        let h = self.fc2.forward(g, store, h)?;
        g.relu(h)
    }

    fn check_input(&self, s: Shape) -> Result<()> {
        if s.c != self.in_channels {
            return Err(shape_err!(
                "stream body expects {} input channels, got {}",
                self.in_channels,
                s.c
            ));
        }
        Ok(())
    }

    /// Output shape after every layer, in the order of the architecture table.
    pub fn trace(&self, input: Shape) -> Result<Vec<(String, Shape)>> {
        self.check_input(input)?;
        let mut rows = Vec::new();
        let mut s = input;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            s = conv.output_shape(s)?;
            rows.push((format!("conv{}", i + 1), s));
            if i < last {
                s = pool_shape(s, POOL_SIZE, POOL_STRIDE)?;
                rows.push((format!("pool{}", i + 1), s));
            }
        }
        s = Shape::vector(s.n, s.c);
        rows.push((format!("pool{}", self.convs.len()), s));
        rows.push(("fc1".into(), Shape::vector(s.n, self.fc1.dout)));
        rows.push(("fc2".into(), Shape::vector(s.n, self.fc2.dout)));
        Ok(rows)
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv2d::param_count).sum::<usize>()
            + self.fc1.param_count()
            + self.fc2.param_count()
    }
}

fn pool_shape(s: Shape, size: usize, stride: usize) -> Result<Shape> {
    if size > s.h || size > s.w {
        return Err(crate::error::config_err!(
            "pool window {size}×{size} is larger than the {}×{} input",
            s.h,
            s.w
        ));
    }
    Ok(Shape::new(s.n, (s.h - size) / stride + 1, (s.w - size) / stride + 1, s.c))
}
