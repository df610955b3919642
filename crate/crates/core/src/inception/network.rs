//! An initialized network: a plan, an activation assignment and weights.

use cmi_tensor::{ChannelStats, Element, Graph, NormMode, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ArchConfig;
use super::plan::{Layer, NetworkPlan, PoolKind};
use crate::activation::{ActivationAssignment, ActivationKind};
use crate::block::{ActivationRoute, BlockVars, ConvBlock, BN_MOMENTUM};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics in normalization and an active dropout mask drawn
    /// from `dropout_seed`.
    Train { dropout_seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}

impl Phase {
    fn norm_mode(self) -> NormMode {
        match self {
            Phase::Train { .. } => NormMode::Train,
            Phase::Eval => NormMode::Eval,
        }
    }
}

/// Handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub logits: Var,
    /// Trainable leaves in the order of [`Network::parameters`].
    pub params: Vec<Var>,
    /// Batch statistics of each block, in block order (train phase only).
    pub batch_stats: Vec<Option<ChannelStats<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    plan: NetworkPlan,
    assignment: ActivationAssignment,
    init_seed: u64,
    pub blocks: Vec<ConvBlock<T>>,
    /// Classifier weights `[features, classes]`.
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
}

impl<T: Element> Network<T> {
    /// Builds the plan and draws every weight from `init_seed`, blocks in
    /// index order, then the classifier.
    pub fn build(config: &ArchConfig, assignment: ActivationAssignment, init_seed: u64) -> Result<Self> {
        let plan = NetworkPlan::build(config)?;
        assignment.block_slices(&plan.block_channels())?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let blocks = plan
            .convs()
            .iter()
            .map(|c| ConvBlock::init(&mut rng, c.in_channels, c.out_channels, c.kernel, c.spec, config.batchnorm))
            .collect();
        let d = plan.feature_channels;
        let k = config.num_classes;
        let limit = (1.0 / d as f64).sqrt();
        let dense_weight = Tensor::<f64>::uniform([d, k], -limit, limit, &mut rng).cast();
        Ok(Network {
            plan,
            assignment,
            init_seed,
            blocks,
            dense_weight,
            dense_bias: Tensor::zeros([k]),
        })
    }

    pub fn plan(&self) -> &NetworkPlan {
        &self.plan
    }

    pub fn config(&self) -> &ArchConfig {
        &self.plan.config
    }

    pub fn assignment(&self) -> &ActivationAssignment {
        &self.assignment
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Swaps the activation assignment, keeping the weights.
    pub fn set_assignment(&mut self, assignment: ActivationAssignment) -> Result<()> {
        assignment.block_slices(&self.plan.block_channels())?;
        self.assignment = assignment;
        Ok(())
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.blocks
            .iter()
            .flat_map(ConvBlock::trainable)
            .chain([&self.dense_weight, &self.dense_bias])
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.blocks
            .iter_mut()
            .flat_map(ConvBlock::trainable_mut)
            .chain([&mut self.dense_weight, &mut self.dense_bias])
    }

    pub fn trainable_count(&self) -> usize {
        self.parameters().map(Tensor::numel).sum()
    }

    /// Trainable values plus normalization running statistics; this is what
    /// a checkpoint stores.
    pub fn stored_count(&self) -> usize {
        self.blocks.iter().map(ConvBlock::stored_count).sum::<usize>() + self.dense_weight.numel() + self.dense_bias.numel()
    }

    /// Forward pass with each block's activation layer taken from the
    /// assignment.
    pub fn forward(&self, g: &mut Graph<T>, input: Var, phase: Phase) -> Result<Forward<T>> {
        let slices = self.assignment.block_slices(&self.plan.block_channels())?;
        self.forward_routed(g, input, phase, |cb| ActivationRoute::Assigned(slices[cb]))
    }

    /// Forward pass in which every block uses the dedicated rectifier op,
    /// ignoring the assignment.
    pub fn forward_fixed_relu(&self, g: &mut Graph<T>, input: Var, phase: Phase) -> Result<Forward<T>> {
        self.forward_routed(g, input, phase, |_| ActivationRoute::FixedRelu)
    }

    fn forward_routed<'a>(
        &self,
        g: &mut Graph<T>,
        input: Var,
        phase: Phase,
        route: impl Fn(usize) -> ActivationRoute<'a>,
    ) -> Result<Forward<T>> {
        let shape = g.value(input).dims4("network input")?;
        let config = self.config();
        if shape[1] != config.channels_in || (shape[2], shape[3]) != config.input_resolution {
            return Err(Error::Invalid(format!(
                "network expects [N,{},{},{}] input, got {shape:?}",
                config.channels_in, config.input_resolution.0, config.input_resolution.1
            )));
        }
        let vars: Vec<BlockVars> = self.blocks.iter().map(|b| b.register(g)).collect();
        let mut run = Run {
            net: self,
            vars: &vars,
            route: &route,
            mode: phase.norm_mode(),
            stats: vec![None; self.blocks.len()],
        };
        let mut x = input;
        for segment in &self.plan.segments {
            x = run.layers(g, &segment.layers, x)?;
        }
        let stats = run.stats;

        let mut features = g.global_avg_pool(x)?;
        if let Phase::Train { dropout_seed } = phase {
            if self.plan.dropout > 0.0 {
                let keep = 1.0 - self.plan.dropout;
                let scale = T::of(1.0 / keep);
                let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
                let shape = g.value(features).shape().to_vec();
                let mask = Tensor::from_fn(shape, |_| if rng.gen::<f64>() < keep { scale } else { T::zero() });
                let mask = g.constant(mask);
                features = g.mul(features, mask)?;
            }
        }
        let w = g.param(self.dense_weight.clone());
        let b = g.param(self.dense_bias.clone());
        let logits = g.dense(features, w, Some(b))?;

        let mut params = Vec::new();
        for v in &vars {
            params.push(v.weight);
            params.extend(v.bias);
            params.extend(v.gamma);
            params.extend(v.beta);
        }
        params.extend([w, b]);
        Ok(Forward {
            logits,
            params,
            batch_stats: stats,
        })
    }

    /// Copies the gradients of a finished backward pass onto the parameters.
    pub fn load_gradients(&mut self, g: &Graph<T>, forward: &Forward<T>) -> Result<()> {
        for (param, &var) in self.parameters_mut().zip(&forward.params) {
            match g.grad(var) {
                Some(grad) => param.set_grad(grad.to_vec())?,
                None => param.clear_grad(),
            }
        }
        Ok(())
    }

    /// Folds a training pass's batch statistics into the running estimates.
    pub fn apply_batch_stats(&mut self, stats: &[Option<ChannelStats<T>>]) {
        let momentum = T::of(BN_MOMENTUM);
        for (block, batch) in self.blocks.iter_mut().zip(stats) {
            if let (Some(norm), Some(batch)) = (block.norm.as_mut(), batch) {
                norm.running.update(batch, momentum);
            }
        }
    }

    /// Eval-phase logits for a batch `[N, C, H, W]`.
    pub fn logits(&self, images: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.constant(images);
        let out = self.forward(&mut g, x, Phase::Eval)?;
        Ok(g.value(out.logits).clone())
    }

    /// Arg-max class of each image; ties go to the lower class index.
    pub fn predict(&self, images: Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.logits(images)?;
        let k = self.config().num_classes;
        Ok(logits.data().chunks(k).map(argmax).collect())
    }

    pub fn cast<U: Element>(&self) -> Network<U> {
        Network {
            plan: self.plan.clone(),
            assignment: self.assignment.clone(),
            init_seed: self.init_seed,
            blocks: self.blocks.iter().map(ConvBlock::cast).collect(),
            dense_weight: self.dense_weight.cast(),
            dense_bias: self.dense_bias.cast(),
        }
    }

    pub(crate) fn from_parts(
        plan: NetworkPlan,
        assignment: ActivationAssignment,
        init_seed: u64,
        blocks: Vec<ConvBlock<T>>,
        dense_weight: Tensor<T>,
        dense_bias: Tensor<T>,
    ) -> Self {
        Network {
            plan,
            assignment,
            init_seed,
            blocks,
            dense_weight,
            dense_bias,
        }
    }
}

pub(crate) fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

struct Run<'n, 'r, T, F> {
    net: &'n Network<T>,
    vars: &'n [BlockVars],
    route: &'r F,
    mode: NormMode,
    stats: Vec<Option<ChannelStats<T>>>,
}

impl<'a, T: Element, F: Fn(usize) -> ActivationRoute<'a>> Run<'_, '_, T, F> {
    fn layers(&mut self, g: &mut Graph<T>, layers: &[Layer], mut x: Var) -> Result<Var> {
        for layer in layers {
            x = self.layer(g, layer, x)?;
        }
        Ok(x)
    }

    fn layer(&mut self, g: &mut Graph<T>, layer: &Layer, x: Var) -> Result<Var> {
        Ok(match layer {
            Layer::Conv(node) => {
                let cb = node.cb_index;
                let (y, stats) = self.net.blocks[cb].forward(g, &self.vars[cb], (self.route)(cb), x, self.mode)?;
                self.stats[cb] = stats;
                y
            }
            Layer::Pool { kind, spec, .. } => match kind {
                PoolKind::Max => g.max_pool2d(x, *spec)?,
                PoolKind::Avg => g.avg_pool2d(x, *spec)?,
            },
            Layer::Branches(branches) => {
                let outs = branches
                    .iter()
                    .map(|b| self.layers(g, b, x))
                    .collect::<Result<Vec<_>>>()?;
                g.concat_channels(&outs)?
            }
        })
    }
}

/// The all-RELU assignment for `config` at per-block granularity.
pub fn relu_assignment(config: &ArchConfig) -> ActivationAssignment {
    ActivationAssignment::per_block(vec![ActivationKind::Relu; config.cb_count()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inception::config::cmi_preset;

    fn desk() -> ArchConfig {
        cmi_preset(1).unwrap().with_width(0.125).with_resolution(64, 64)
    }

    #[test]
    fn desk_forward_shape() {
        let c = desk();
        let net = Network::<f32>::build(&c, relu_assignment(&c), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::uniform([2, 3, 64, 64], 0.0, 1.0, &mut rng));
        let out = net.forward(&mut g, x, Phase::Train { dropout_seed: 9 }).unwrap();
        assert_eq!(g.value(out.logits).shape(), &[2, 4]);
        assert_eq!(out.params.len(), net.parameters().count());
        assert!(out.batch_stats.iter().all(Option::is_some));
    }

    #[test]
    fn same_seed_same_weights() {
        let c = desk();
        let a = Network::<f32>::build(&c, relu_assignment(&c), 11).unwrap();
        let b = Network::<f32>::build(&c, relu_assignment(&c), 11).unwrap();
        let other = Network::<f32>::build(&c, relu_assignment(&c), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.dense_weight, other.dense_weight);
    }

    #[test]
    fn assignment_length_is_checked() {
        let c = desk();
        let short = ActivationAssignment::per_block(vec![ActivationKind::Relu; 57]);
        assert!(matches!(Network::<f32>::build(&c, short, 0), Err(Error::Assignment(_))));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let c = desk();
        let net = Network::<f32>::build(&c, relu_assignment(&c), 0).unwrap();
        assert!(net.predict(Tensor::zeros([1, 3, 32, 32])).is_err());
    }
}
