//! Minibatch training and evaluation of a single network.

use std::time::Instant;

use cmi_tensor::{Element, Graph, Sgd, TensorError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{f1_score, F1Average};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inception::{Network, Phase};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Random horizontal flips of training images.
    pub flip: bool,
    pub f1_average: F1Average,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            precision: Precision::F32,
            flip: false,
            f1_average: F1Average::Macro,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Invalid(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TrainStatus {
    Completed,
    /// The loss or a gradient became non-finite during `epoch` (1-based).
    Diverged { epoch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean minibatch loss of each completed epoch.
    pub loss_curve: Vec<f64>,
    pub status: TrainStatus,
    pub t_train_seconds: f64,
}

fn flip_horizontal<T: Copy>(data: &mut [T], w: usize) {
    for row in data.chunks_mut(w) {
        row.reverse();
    }
}

/// Trains `net` in place on the samples at `indices`.
///
/// Each epoch shuffles the indices with a stream seeded by `config.seed`,
/// then takes minibatches in order. A non-finite loss or gradient stops
/// training and is reported as [`TrainStatus::Diverged`].
pub fn train_model<T: Element>(
    net: &mut Network<T>,
    data: &Dataset,
    indices: &[usize],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if indices.is_empty() {
        return Err(Error::Invalid("cannot train on an empty slice".into()));
    }
    if data.num_classes() != net.config().num_classes {
        return Err(Error::Invalid(format!(
            "dataset has {} classes, network outputs {}",
            data.num_classes(),
            net.config().num_classes
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sgd = Sgd::new(T::of(config.learning_rate), T::of(config.momentum))?;
    let mut order = indices.to_vec();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let start = Instant::now();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let (mut x, y) = data.batch::<T>(chunk)?;
            if config.flip {
                let w = x.shape()[3];
                let per_image = x.numel() / chunk.len();
                for img in x.data_mut().chunks_mut(per_image) {
                    if rng.gen::<bool>() {
                        flip_horizontal(img, w);
                    }
                }
            }
            let dropout_seed = rng.gen();
            match step(net, &mut sgd, x, &y, dropout_seed) {
                Ok(loss) => {
                    total += loss;
                    batches += 1;
                }
                Err(Error::Tensor(TensorError::NonFinite { op })) => {
                    log::warn!("training diverged in epoch {epoch} ({op} produced a non-finite value)");
                    return Ok(TrainOutcome {
                        loss_curve,
                        status: TrainStatus::Diverged { epoch },
                        t_train_seconds: start.elapsed().as_secs_f64(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let mean = total / batches as f64;
        log::debug!("epoch {epoch}: loss {mean:.5}");
        loss_curve.push(mean);
    }
    Ok(TrainOutcome {
        loss_curve,
        status: TrainStatus::Completed,
        t_train_seconds: start.elapsed().as_secs_f64(),
    })
}

fn step<T: Element>(
    net: &mut Network<T>,
    sgd: &mut Sgd<T>,
    x: cmi_tensor::Tensor<T>,
    y: &[usize],
    dropout_seed: u64,
) -> Result<f64> {
    let mut g = Graph::new();
    let input = g.constant(x);
    let fwd = net.forward(&mut g, input, Phase::Train { dropout_seed })?;
    let loss = g.softmax_cross_entropy(fwd.logits, y)?;
    let value = g.value(loss).data()[0].to_f64().unwrap_or(f64::NAN);
    g.backward(loss)?;
    net.load_gradients(&g, &fwd)?;
    if net.parameters().any(|p| p.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite()))) {
        return Err(TensorError::NonFinite { op: "gradient" }.into());
    }
    sgd.step(net.parameters_mut())?;
    net.apply_batch_stats(&fwd.batch_stats);
    Ok(value)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub f1: f64,
    pub t_test_seconds: f64,
}

/// Eval-phase predictions over `indices`, in batches of `batch_size`.
pub fn evaluate_model<T: Element>(
    net: &Network<T>,
    data: &Dataset,
    indices: &[usize],
    batch_size: usize,
    average: F1Average,
) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty slice".into()));
    }
    let start = Instant::now();
    let mut predictions = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, _) = data.batch::<T>(chunk)?;
        predictions.extend(net.predict(x)?);
    }
    let t_test_seconds = start.elapsed().as_secs_f64();
    let truth: Vec<usize> = indices.iter().map(|&i| data.samples[i].label).collect();
    let f1 = f1_score(&truth, &predictions, data.num_classes(), average)?;
    Ok(Evaluation {
        predictions,
        f1,
        t_test_seconds,
    })
}
