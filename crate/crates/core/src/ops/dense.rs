use crate::autograd::{Graph, NodeId, Op};
use crate::error::{shape_err, Result};
use crate::tensor::{gemm, MatRef, Real, Shape, Tensor};

/// Shape used for a `din × dout` dense weight.
pub const fn weight_shape(din: usize, dout: usize) -> Shape {
    Shape::new(1, 1, din, dout)
}

/// `y = x·W + b` for per-item vectors `x` (`N×1×1×din`).
pub fn forward<T: Real>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), weight.shape());
    let (din, dout) = (ws.w, ws.c);
    if !xs.is_vector() || xs.c != din || ws.n != 1 || ws.h != 1 {
        return Err(shape_err!(
            "dense: input {xs} does not match weight {din}×{dout}"
        ));
    }
    if bias.len() != dout {
        return Err(shape_err!("dense: bias of length {} for {dout} outputs", bias.len()));
    }
    let mut out = Tensor::zeros(Shape::vector(xs.n, dout));
    for row in out.data_mut().chunks_exact_mut(dout) {
        row.copy_from_slice(bias.data());
    }
    gemm(
        MatRef::new(x.data(), xs.n, din),
        MatRef::new(weight.data(), din, dout),
        out.data_mut(),
        true,
    );
    Ok(out)
}

pub(crate) struct DenseGrads<T: Real> {
    pub input: Option<Tensor<T>>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

pub(crate) fn backward<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    g: &Tensor<T>,
    want_input: bool,
) -> DenseGrads<T> {
    let n = x.shape().n;
    let (din, dout) = (weight.shape().w, weight.shape().c);
    let mut dw = Tensor::zeros(weight.shape());
    gemm(
        MatRef::new(x.data(), n, din).t(),
        MatRef::new(g.data(), n, dout),
        dw.data_mut(),
        false,
    );
    let mut db = Tensor::zeros(Shape::vector(1, dout));
    for row in g.data().chunks_exact(dout) {
        db.data_mut().iter_mut().zip(row).for_each(|(d, &v)| *d += v);
    }
    let input = want_input.then(|| {
        let mut dx = Tensor::zeros(x.shape());
        gemm(
            MatRef::new(g.data(), n, dout),
            MatRef::new(weight.data(), din, dout).t(),
            dx.data_mut(),
            false,
        );
        dx
    });
    DenseGrads {
        input,
        weight: dw,
        bias: db,
    }
}

impl<T: Real> Graph<T> {
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = forward(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Dense {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }
}
