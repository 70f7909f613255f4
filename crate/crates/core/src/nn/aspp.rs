//! Atrous spatial pyramid pooling: parallel dilated convolutions, concatenated.

use crate::autograd::{Graph, NodeId, ParamStore};
use crate::error::Result;
use crate::nn::{Conv2d, ParamBuilder};
use crate::ops::ConvSpec;
use crate::tensor::{Real, Shape};

/// Dilation rates of the 3×3 branches; the 1×1 branch has rate 1.
pub const ASPP_RATES: [usize; 4] = [3, 6, 12, 18];
pub const ASPP_FILTERS: usize = 32;

#[derive(Clone, Debug)]
pub struct Aspp {
    pub branches: Vec<Conv2d>,
}

impl Aspp {
    pub fn new<T: Real>(pb: &mut ParamBuilder<'_, T>, name: &str, cin: usize) -> Result<Self> {
        let mut s = pb.scope(name);
        let mut branches = vec![Conv2d::new(&mut s, "b1x1", 1, cin, ASPP_FILTERS, ConvSpec::same(), true)?];
        for rate in ASPP_RATES {
            branches.push(Conv2d::new(
                &mut s,
                &format!("b3x3_r{rate}"),
                3,
                cin,
                ASPP_FILTERS,
                ConvSpec::same().with_dilation(rate),
                true,
            )?);
        }
        Ok(Aspp { branches })
    }

    /// Each branch is conv + bias + ReLU; outputs are concatenated in rate order.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId> {
        let outs = self
            .branches
            .iter()
            .map(|b| {
                let y = b.forward(g, store, x)?;
                g.relu(y)
            })
            .collect::<Result<Vec<_>>>()?;
        g.concat_channels(&outs)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let mut c = 0;
        let mut out = input;
        for b in &self.branches {
            out = b.output_shape(input)?;
            c += out.c;
        }
        Ok(Shape { c, ..out })
    }

    pub fn out_channels(&self) -> usize {
        self.branches.iter().map(|b| b.cout).sum()
    }

    pub fn param_count(&self) -> usize {
        self.branches.iter().map(Conv2d::param_count).sum()
    }
}
