use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use crate::error::{shape_err, Error, Result};
use crate::ops::conv::{self, ConvGeom};
use crate::ops::norm::{self, BnCache, StatUpdate};
use crate::ops::{activation, dense, join, loss, pool, upsample};
use crate::tensor::{Real, Shape, Tensor};

/// Whether layers with train/eval behavior (batch norm, dropout) run in training mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

pub(crate) enum Op<T: Real> {
    Input,
    Param(ParamId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: Option<NodeId>,
        geom: ConvGeom,
    },
    MaxPool {
        input: NodeId,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        cache: BnCache<T>,
        relu: bool,
    },
    Relu {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    Softmax {
        input: NodeId,
    },
    Upsample {
        input: NodeId,
        factor: usize,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Dropout {
        input: NodeId,
        mask: Vec<T>,
    },
    Concat {
        inputs: Vec<NodeId>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sum {
        input: NodeId,
    },
    WeightedSum {
        input: NodeId,
        weights: Tensor<T>,
    },
    Bce {
        p: NodeId,
        target: Tensor<T>,
    },
    CategoricalCe {
        p: NodeId,
        target: Tensor<T>,
    },
}

pub(crate) struct Node<T: Real> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// A tape of operations recorded during one forward pass.
///
/// Nodes are appended after their inputs, so reverse insertion order is a
/// reverse topological order; backward visits each node exactly once.
/// One graph serves one forward/backward; build a fresh graph per minibatch.
pub struct Graph<T: Real = f32> {
    pub(crate) nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, NodeId>,
    pub(crate) stat_updates: Vec<StatUpdate<T>>,
    pub(crate) rng: ChaCha8Rng,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self::with_seed(0)
    }

    /// Graph whose dropout masks are drawn from a generator seeded with `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            stat_updates: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Scalar value of a 1-element node.
    pub fn scalar(&self, id: NodeId) -> Result<T> {
        let v = self.value(id);
        if v.len() != 1 {
            return Err(shape_err!("node holds {} not a scalar", v.shape()));
        }
        Ok(v.data()[0])
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input (no gradient flows into it).
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// The current value of a variable. Repeated requests for the same variable
    /// share one node so gradients accumulate once.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let var = store.get(id);
        let n = self.push(var.value.clone(), Op::Param(id), var.trainable);
        self.param_nodes.insert(id, n);
        n
    }

    pub(crate) fn any_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i.0].requires_grad)
    }

    /// Writes running-statistic updates gathered by train-mode batch norms into `store`.
    pub fn commit_stats(&mut self, store: &mut ParamStore<T>) {
        for update in self.stat_updates.drain(..) {
            update.apply(store);
        }
    }

    /// Accumulates `∂loss/∂value` into every trainable variable reachable from `loss`.
    pub fn backward(&mut self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        self.backward_impl(loss, store, false)
    }

    /// Like [`Graph::backward`] but frees intermediate values as soon as they are
    /// no longer needed, bounding peak memory. Consumes the graph.
    pub fn backward_release(mut self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        self.backward_impl(loss, store, true)
    }

    fn backward_impl(&mut self, loss: NodeId, store: &mut ParamStore<T>, release: bool) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                if release {
                    self.release(i);
                }
                continue;
            };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backward_node(i, g, &mut grads, store)?;
            if release {
                self.release(i);
            }
        }
        Ok(())
    }

    fn release(&mut self, i: usize) {
        self.nodes[i].value = Tensor::zeros(Shape::new(0, 0, 0, 0));
        if let Op::MaxPool { argmax, .. } = &mut self.nodes[i].op {
            *argmax = Vec::new();
        }
    }

    fn backward_node(
        &self,
        i: usize,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        store: &mut ParamStore<T>,
    ) -> Result<()> {
        let nodes = &self.nodes;
        let val = |id: NodeId| &nodes[id.0].value;
        let wants = |id: NodeId| nodes[id.0].requires_grad;
        let mut put = |id: NodeId, t: Tensor<T>| accumulate(grads, nodes, id, t);

        match &nodes[i].op {
            Op::Input => {}
            Op::Param(pid) => store.accumulate_grad(*pid, &g)?,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let want_bias = bias.map(wants).unwrap_or(false);
                let gr = conv::backward(
                    val(*input),
                    val(*kernel),
                    geom,
                    &g,
                    wants(*input),
                    wants(*kernel),
                    want_bias,
                );
                if let Some(t) = gr.input {
                    put(*input, t);
                }
                if let Some(t) = gr.kernel {
                    put(*kernel, t);
                }
                if let (Some(b), Some(t)) = (bias, gr.bias) {
                    put(*b, t);
                }
            }
            Op::MaxPool { input, argmax } => {
                put(*input, pool::max_pool_backward(val(*input).shape(), argmax, &g));
            }
            Op::GlobalAvgPool { input } => {
                put(*input, pool::global_avg_pool_backward(val(*input).shape(), &g));
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                cache,
                relu,
            } => {
                let gr = norm::backward(
                    val(*input),
                    val(*gamma),
                    &nodes[i].value,
                    cache,
                    *relu,
                    &g,
                    wants(*input),
                );
                if let Some(t) = gr.input {
                    put(*input, t);
                }
                put(*gamma, gr.gamma);
                put(*beta, gr.beta);
            }
            Op::Relu { input } => put(*input, activation::relu_backward(&nodes[i].value, &g)),
            Op::Sigmoid { input } => {
                put(*input, activation::sigmoid_backward(&nodes[i].value, &g))
            }
            Op::Softmax { input } => {
                put(*input, activation::softmax_backward(&nodes[i].value, &g))
            }
            Op::Upsample { input, factor } => {
                put(
                    *input,
                    upsample::bilinear_backward(val(*input).shape(), *factor, &g),
                );
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let gr = dense::backward(val(*input), val(*weight), &g, wants(*input));
                if let Some(t) = gr.input {
                    put(*input, t);
                }
                put(*weight, gr.weight);
                put(*bias, gr.bias);
            }
            Op::Dropout { input, mask } => {
                let mut t = g;
                t.data_mut().iter_mut().zip(mask).for_each(|(v, &m)| *v *= m);
                put(*input, t);
            }
            Op::Concat { inputs } => {
                let shapes: Vec<Shape> = inputs.iter().map(|&id| val(id).shape()).collect();
                for (id, t) in inputs.iter().zip(join::concat_backward(&shapes, &g)) {
                    put(*id, t);
                }
            }
            Op::Add { a, b } => {
                if a == b {
                    put(*a, g.map(|v| v + v));
                } else {
                    put(*a, g.clone());
                    put(*b, g);
                }
            }
            Op::Sum { input } => {
                put(*input, Tensor::full(val(*input).shape(), g.data()[0]));
            }
            Op::WeightedSum { input, weights } => {
                let s = g.data()[0];
                put(*input, weights.map(|w| w * s));
            }
            Op::Bce { p, target } => put(*p, loss::bce_backward(val(*p), target, g.data()[0])),
            Op::CategoricalCe { p, target } => {
                put(*p, loss::categorical_ce_backward(val(*p), target, g.data()[0]))
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], nodes: &[Node<T>], id: NodeId, g: Tensor<T>) {
    if !nodes[id.0].requires_grad {
        return;
    }
    match &mut grads[id.0] {
        Some(existing) => {
            existing
                .add_assign(&g)
                .expect("gradient shape matches its node");
        }
        slot @ None => *slot = Some(g),
    }
}
