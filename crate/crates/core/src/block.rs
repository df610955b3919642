//! Convolutional block: convolution, optional batch normalization, then an
//! activation layer.

use cmi_tensor::{ChannelStats, Conv2dSpec, Element, Graph, NormMode, Tensor, Var};
use rand::Rng;

use crate::activation::{multi_activation_layer, ActivationKind};
use crate::error::Result;

pub const BN_EPS: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running: ChannelStats<T>,
}

impl<T: Element> BatchNormParams<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormParams {
            gamma: Tensor::full([channels], T::one()),
            beta: Tensor::zeros([channels]),
            running: ChannelStats::identity(channels),
        }
    }
}

/// Weights of one convolutional block. A bias is only carried when batch
/// normalization is off, since the normalization's shift subsumes it.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub norm: Option<BatchNormParams<T>>,
    pub spec: Conv2dSpec,
}

/// How the block's activation layer is realized.
#[derive(Clone, Copy, Debug)]
pub enum ActivationRoute<'a> {
    /// The block's slot of an activation assignment.
    Assigned(&'a [ActivationKind]),
    /// A dedicated rectifier op, independent of the assignment machinery.
    FixedRelu,
}

/// Graph handles of a block's trainable tensors.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub weight: Var,
    pub bias: Option<Var>,
    pub gamma: Option<Var>,
    pub beta: Option<Var>,
}

impl<T: Element> ConvBlock<T> {
    /// He fan-in initialization. Draws are made in `f64` so that blocks built
    /// at different precisions from one seed agree up to rounding.
    pub fn init<R: Rng>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        spec: Conv2dSpec,
        batchnorm: bool,
    ) -> Self {
        let fan_in = (in_channels * kernel.0 * kernel.1) as f64;
        let weight = Tensor::<f64>::randn([out_channels, in_channels, kernel.0, kernel.1], (2.0 / fan_in).sqrt(), rng);
        ConvBlock {
            weight: weight.cast(),
            bias: (!batchnorm).then(|| Tensor::zeros([out_channels])),
            norm: batchnorm.then(|| BatchNormParams::new(out_channels)),
            spec,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn register(&self, g: &mut Graph<T>) -> BlockVars {
        BlockVars {
            weight: g.param(self.weight.clone()),
            bias: self.bias.as_ref().map(|b| g.param(b.clone())),
            gamma: self.norm.as_ref().map(|n| g.param(n.gamma.clone())),
            beta: self.norm.as_ref().map(|n| g.param(n.beta.clone())),
        }
    }

    /// conv → (batch norm) → activation layer. In train mode the batch
    /// statistics are returned for the caller to fold into the running stats.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        vars: &BlockVars,
        route: ActivationRoute<'_>,
        input: Var,
        mode: NormMode,
    ) -> Result<(Var, Option<ChannelStats<T>>)> {
        let mut x = g.conv2d(input, vars.weight, vars.bias, self.spec)?;
        let mut stats = None;
        if let (Some(norm), Some(gamma), Some(beta)) = (&self.norm, vars.gamma, vars.beta) {
            let (y, batch) = g.batch_norm(x, gamma, beta, &norm.running, mode, T::of(BN_EPS))?;
            x = y;
            stats = batch;
        }
        let y = match route {
            ActivationRoute::Assigned(kinds) => multi_activation_layer(g, kinds, x)?,
            ActivationRoute::FixedRelu => g.relu(x)?,
        };
        Ok((y, stats))
    }

    /// Trainable tensors in registration order.
    pub fn trainable(&self) -> impl Iterator<Item = &Tensor<T>> {
        std::iter::once(&self.weight)
            .chain(self.bias.iter())
            .chain(self.norm.iter().flat_map(|n| [&n.gamma, &n.beta]))
    }

    pub fn trainable_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        std::iter::once(&mut self.weight)
            .chain(self.bias.iter_mut())
            .chain(self.norm.iter_mut().flat_map(|n| [&mut n.gamma, &mut n.beta]))
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(Tensor::numel).sum()
    }

    /// Trainable values plus running statistics.
    pub fn stored_count(&self) -> usize {
        self.trainable_count() + self.norm.as_ref().map_or(0, |n| 2 * n.running.channels())
    }

    pub fn cast<U: Element>(&self) -> ConvBlock<U> {
        ConvBlock {
            weight: self.weight.cast(),
            bias: self.bias.as_ref().map(Tensor::cast),
            norm: self.norm.as_ref().map(|n| BatchNormParams {
                gamma: n.gamma.cast(),
                beta: n.beta.cast(),
                running: ChannelStats {
                    mean: n.running.mean.iter().map(|v| v.cast()).collect(),
                    var: n.running.var.iter().map(|v| v.cast()).collect(),
                },
            }),
            spec: self.spec,
        }
    }
}

/// Applies a standalone convolutional block to `input`; the block's weights
/// are registered as trainable leaves on `g`.
pub fn convolutional_block<T: Element>(
    g: &mut Graph<T>,
    block: &ConvBlock<T>,
    slot: &[ActivationKind],
    input: Var,
    mode: NormMode,
) -> Result<(Var, BlockVars, Option<ChannelStats<T>>)> {
    let vars = block.register(g);
    let (y, stats) = block.forward(g, &vars, ActivationRoute::Assigned(slot), input, mode)?;
    Ok((y, vars, stats))
}
