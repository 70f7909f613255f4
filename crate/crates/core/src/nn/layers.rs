//! Single-operation layers bound to their variables.

use crate::autograd::{Graph, NodeId, ParamId, ParamStore, Role};
use crate::error::Result;
use crate::nn::ParamBuilder;
use crate::ops::conv::ConvGeom;
use crate::ops::dense::weight_shape;
use crate::ops::ConvSpec;
use crate::tensor::{Real, Shape};

/// Square convolution with an optional bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
}

impl Conv2d {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<Self> {
        let mut s = pb.scope(name);
        let kernel = s.he_normal("kernel", Shape::new(k, k, cin, cout), k * k * cin)?;
        let bias = if bias {
            Some(s.constant("bias", Shape::vector(1, cout), 0.0, Role::Bias)?)
        } else {
            None
        };
        Ok(Conv2d {
            kernel,
            bias,
            spec,
            k,
            cin,
            cout,
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId> {
        let kernel = g.param(store, self.kernel);
        let bias = self.bias.map(|b| g.param(store, b));
        g.conv2d(x, kernel, bias, self.spec)
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let geom = ConvGeom::resolve(
            input,
            Shape::new(self.k, self.k, self.cin, self.cout),
            &self.spec,
        )?;
        Ok(Shape::new(input.n, geom.out_h, geom.out_w, self.cout))
    }

    pub fn param_count(&self) -> usize {
        self.k * self.k * self.cin * self.cout + self.bias.map_or(0, |_| self.cout)
    }
}

/// Fully connected layer over per-item vectors.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub din: usize,
    pub dout: usize,
}

impl Dense {
    pub fn new<T: Real>(
        pb: &mut ParamBuilder<'_, T>,
        name: &str,
        din: usize,
        dout: usize,
    ) -> Result<Self> {
        let mut s = pb.scope(name);
        Ok(Dense {
            weight: s.he_normal("weight", weight_shape(din, dout), din)?,
            bias: s.constant("bias", Shape::vector(1, dout), 0.0, Role::Bias)?,
            din,
            dout,
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> Result<NodeId> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.dense(x, w, b)
    }

    pub fn param_count(&self) -> usize {
        self.din * self.dout + self.dout
    }
}
