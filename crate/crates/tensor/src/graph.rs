//! Tape of recorded operations and the reverse sweep over it.
//!
//! Nodes are appended in evaluation order, so the tape index order is a
//! topological order of the (acyclic) computation graph and the reverse
//! sweep visits every node exactly once.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::ops::{conv, norm, pool};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: conv::ConvGeometry,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    AvgPool {
        input: Var,
        geom: pool::PoolGeometry,
    },
    GlobalAvgPool {
        input: Var,
    },
    Concat {
        inputs: Vec<Var>,
    },
    Dense {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: norm::BatchNormSaved<T>,
    },
    Pointwise {
        input: Var,
        deriv: Vec<T>,
    },
    Relu {
        input: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
    },
    Sum {
        input: Var,
    },
    Mul {
        lhs: Var,
        rhs: Var,
    },
    Add {
        lhs: Var,
        rhs: Var,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool2d",
            Op::AvgPool { .. } => "avgpool2d",
            Op::GlobalAvgPool { .. } => "global_avgpool",
            Op::Concat { .. } => "concat_channels",
            Op::Dense { .. } => "dense",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Pointwise { .. } => "pointwise",
            Op::Relu { .. } => "relu",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::Sum { .. } => "sum",
            Op::Mul { .. } => "mul",
            Op::Add { .. } => "add",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Single-owner tape recording one forward pass.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a trainable leaf; its gradient is kept after [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Records a constant leaf (data, labels, fixed masks).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    fn leaf(&mut self, mut value: Tensor<T>, requires_grad: bool) -> Var {
        value.clear_grad();
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// Gradient of the last backward pass, for leaves that require one.
    pub fn grad(&self, var: Var) -> Option<&[T]> {
        self.nodes[var.0].value.grad()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse-mode sweep from a scalar `loss`, populating the gradient slot of
    /// every trainable leaf it reaches. Previous leaf gradients are replaced.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        let mut leaf_grads = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            let mut sink = GradSink {
                nodes: &self.nodes,
                grads: &mut grads,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => leaf_grads.push((i, g)),
                Op::Conv2d {
                    input,
                    weight,
                    bias,
                    geom,
                } => {
                    let x = sink.value(*input).data();
                    let w = sink.value(*weight).data();
                    let gx = sink.wants(*input).then(|| conv::backward_input(geom, w, &g));
                    let gw = sink.wants(*weight).then(|| conv::backward_weight(geom, x, &g));
                    let gb = bias
                        .filter(|b| sink.wants(*b))
                        .map(|_| conv::backward_bias(geom, &g));
                    sink.add(*input, gx);
                    sink.add(*weight, gw);
                    if let Some(b) = bias {
                        sink.add(*b, gb);
                    }
                }
                Op::MaxPool { input, argmax } => {
                    if sink.wants(*input) {
                        let mut gx = vec![T::zero(); sink.value(*input).numel()];
                        for (o, &src) in argmax.iter().enumerate() {
                            gx[src] += g[o];
                        }
                        sink.add(*input, Some(gx));
                    }
                }
                Op::AvgPool { input, geom } => {
                    if sink.wants(*input) {
                        sink.add(*input, Some(pool::avg_backward(geom, &g)));
                    }
                }
                Op::GlobalAvgPool { input } => {
                    if sink.wants(*input) {
                        let [n, c, h, w] = sink.value(*input).dims4("global_avgpool")?;
                        let area = h * w;
                        let scale = T::one() / T::of(area as f64);
                        let mut gx = vec![T::zero(); n * c * area];
                        for (plane, &go) in gx.chunks_mut(area).zip(&g) {
                            let v = go * scale;
                            plane.iter_mut().for_each(|x| *x = v);
                        }
                        sink.add(*input, Some(gx));
                    }
                }
                Op::Concat { inputs } => {
                    let [n, _, h, w] = node.value.dims4("concat_channels")?;
                    let area = h * w;
                    let total: usize = node.value.shape()[1] * area;
                    let mut offset = 0;
                    for &input in inputs {
                        let ci = sink.value(input).shape()[1];
                        let block = ci * area;
                        if sink.wants(input) {
                            let mut gx = Vec::with_capacity(n * block);
                            for b in 0..n {
                                let start = b * total + offset;
                                gx.extend_from_slice(&g[start..start + block]);
                            }
                            sink.add(input, Some(gx));
                        }
                        offset += block;
                    }
                }
                Op::Dense {
                    input,
                    weight,
                    bias,
                } => {
                    let x = sink.value(*input);
                    let [n, d] = x.dims2("dense")?;
                    let k = sink.value(*weight).shape()[1];
                    let gx = sink.wants(*input).then(|| {
                        let mut gx = vec![T::zero(); n * d];
                        crate::element::matmul(
                            n,
                            k,
                            d,
                            &g,
                            crate::element::Layout::Normal,
                            sink.value(*weight).data(),
                            crate::element::Layout::Transposed,
                            &mut gx,
                            false,
                        );
                        gx
                    });
                    let gw = sink.wants(*weight).then(|| {
                        let mut gw = vec![T::zero(); d * k];
                        crate::element::matmul(
                            d,
                            n,
                            k,
                            x.data(),
                            crate::element::Layout::Transposed,
                            &g,
                            crate::element::Layout::Normal,
                            &mut gw,
                            false,
                        );
                        gw
                    });
                    let gb = bias.filter(|b| sink.wants(*b)).map(|_| {
                        let mut gb = vec![T::zero(); k];
                        for row in g.chunks(k) {
                            for (acc, v) in gb.iter_mut().zip(row) {
                                *acc += *v;
                            }
                        }
                        gb
                    });
                    sink.add(*input, gx);
                    sink.add(*weight, gw);
                    if let Some(b) = bias {
                        sink.add(*b, gb);
                    }
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    saved,
                } => {
                    let shape = sink.value(*input).dims4("batchnorm")?;
                    let grads = norm::backward(shape, sink.value(*gamma).data(), saved, &g);
                    if sink.wants(*input) {
                        sink.add(*input, Some(grads.input));
                    }
                    if sink.wants(*gamma) {
                        sink.add(*gamma, Some(grads.gamma));
                    }
                    if sink.wants(*beta) {
                        sink.add(*beta, Some(grads.beta));
                    }
                }
                Op::Pointwise { input, deriv } => {
                    if sink.wants(*input) {
                        let gx = g.iter().zip(deriv).map(|(&go, &d)| go * d).collect();
                        sink.add(*input, Some(gx));
                    }
                }
                Op::Relu { input } => {
                    if sink.wants(*input) {
                        let x = sink.value(*input).data();
                        let gx = g
                            .iter()
                            .zip(x)
                            .map(|(&go, &xv)| go * if xv > T::zero() { T::one() } else { T::zero() })
                            .collect();
                        sink.add(*input, Some(gx));
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    probs,
                    labels,
                } => {
                    if sink.wants(*logits) {
                        let n = labels.len();
                        let k = probs.len() / n;
                        let scale = g[0] / T::of(n as f64);
                        let mut gx: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                        for (row, &label) in labels.iter().enumerate() {
                            gx[row * k + label] -= scale;
                        }
                        sink.add(*logits, Some(gx));
                    }
                }
                Op::Sum { input } => {
                    if sink.wants(*input) {
                        let numel = sink.value(*input).numel();
                        sink.add(*input, Some(vec![g[0]; numel]));
                    }
                }
                Op::Mul { lhs, rhs } => {
                    let a = sink.value(*lhs).data();
                    let b = sink.value(*rhs).data();
                    let ga = sink
                        .wants(*lhs)
                        .then(|| g.iter().zip(b).map(|(&go, &bv)| go * bv).collect());
                    let gb = sink
                        .wants(*rhs)
                        .then(|| g.iter().zip(a).map(|(&go, &av)| go * av).collect());
                    sink.add(*lhs, ga);
                    sink.add(*rhs, gb);
                }
                Op::Add { lhs, rhs } => {
                    let ga = sink.wants(*lhs).then(|| g.clone());
                    let gb = sink.wants(*rhs).then(|| g.clone());
                    sink.add(*lhs, ga);
                    sink.add(*rhs, gb);
                }
            }
        }

        for node in &mut self.nodes {
            if matches!(node.op, Op::Leaf) {
                node.value.clear_grad();
            }
        }
        for (i, g) in leaf_grads {
            self.nodes[i].value.set_grad(g)?;
        }
        Ok(())
    }
}

/// Accumulates gradient contributions for the nodes upstream of the one being
/// differentiated.
struct GradSink<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Element> GradSink<'a, T> {
    fn value(&self, var: Var) -> &'a Tensor<T> {
        &self.nodes[var.0].value
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn add(&mut self, var: Var, contribution: Option<Vec<T>>) {
        let Some(contribution) = contribution else { return };
        match &mut self.grads[var.0] {
            Some(acc) => {
                for (a, c) in acc.iter_mut().zip(&contribution) {
                    *a += *c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }
}
