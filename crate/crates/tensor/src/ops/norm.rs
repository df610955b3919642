//! Per-channel batch normalization over `[N, C, H, W]` tensors.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize by batch statistics.
    Train,
    /// Normalize by the supplied running statistics.
    Eval,
}

/// Per-channel mean and variance, either running estimates or the statistics
/// of one batch (variance unbiased).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Element> ChannelStats<T> {
    /// Running statistics before any update: zero mean, unit variance.
    pub fn identity(channels: usize) -> Self {
        ChannelStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Exponential moving average `running ← (1 − momentum)·running + momentum·batch`.
    pub fn update(&mut self, batch: &ChannelStats<T>, momentum: T) {
        let keep = T::one() - momentum;
        for (r, b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + momentum * *b;
        }
        for (r, b) in self.var.iter_mut().zip(&batch.var) {
            *r = keep * *r + momentum * *b;
        }
    }
}

pub(crate) struct BatchNormSaved<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: NormMode,
}

pub(crate) struct BatchNormGrads<T> {
    pub input: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

pub(crate) fn forward<T: Element>(
    input: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    running: &ChannelStats<T>,
    mode: NormMode,
    eps: T,
) -> Result<(Tensor<T>, BatchNormSaved<T>, Option<ChannelStats<T>>)> {
    let [n, c, h, w] = input.dims4("batchnorm")?;
    let area = h * w;
    let count = n * area;
    if count == 0 {
        return Err(TensorError::structural("batchnorm", "zero-size batch"));
    }
    if eps <= T::zero() {
        return Err(TensorError::structural("batchnorm", "eps must be positive"));
    }
    for (name, len) in [("gamma", gamma.len()), ("beta", beta.len()), ("running stats", running.channels())] {
        if len != c {
            return Err(TensorError::structural(
                "batchnorm",
                format!("{name} has {len} channels, input has {c}"),
            ));
        }
    }
    let x = input.data();
    let channel = |ch: usize| (0..n).flat_map(move |b| (b * c + ch) * area..(b * c + ch + 1) * area);

    let (mean, var, batch_stats) = match mode {
        NormMode::Train => {
            let inv_count = T::one() / T::of(count as f64);
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mu = channel(ch).map(|i| x[i]).sum::<T>() * inv_count;
                let sq = channel(ch).map(|i| (x[i] - mu) * (x[i] - mu)).sum::<T>();
                mean[ch] = mu;
                var[ch] = sq * inv_count;
            }
            let unbiased = if count > 1 {
                let scale = T::of(count as f64 / (count - 1) as f64);
                var.iter().map(|&v| v * scale).collect()
            } else {
                var.clone()
            };
            let stats = ChannelStats {
                mean: mean.clone(),
                var: unbiased,
            };
            (mean, var, Some(stats))
        }
        NormMode::Eval => (running.mean.clone(), running.var.clone(), None),
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for ch in 0..c {
        for i in channel(ch) {
            let xh = (x[i] - mean[ch]) * inv_std[ch];
            xhat[i] = xh;
            out[i] = gamma[ch] * xh + beta[ch];
        }
    }
    Ok((
        Tensor::new(input.shape().to_vec(), out)?,
        BatchNormSaved { xhat, inv_std, mode },
        batch_stats,
    ))
}

pub(crate) fn backward<T: Element>(
    [n, c, h, w]: [usize; 4],
    gamma: &[T],
    saved: &BatchNormSaved<T>,
    gout: &[T],
) -> BatchNormGrads<T> {
    let area = h * w;
    let count = T::of((n * area) as f64);
    let mut gin = vec![T::zero(); gout.len()];
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let idx = || (0..n).flat_map(move |b| (b * c + ch) * area..(b * c + ch + 1) * area);
        let sum_dy: T = idx().map(|i| gout[i]).sum();
        let sum_dy_xhat: T = idx().map(|i| gout[i] * saved.xhat[i]).sum();
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let scale = gamma[ch] * saved.inv_std[ch];
        match saved.mode {
            NormMode::Train => {
                let k = scale / count;
                for i in idx() {
                    gin[i] = k * (count * gout[i] - sum_dy - saved.xhat[i] * sum_dy_xhat);
                }
            }
            NormMode::Eval => {
                for i in idx() {
                    gin[i] = scale * gout[i];
                }
            }
        }
    }
    BatchNormGrads {
        input: gin,
        gamma: dgamma,
        beta: dbeta,
    }
}

impl<T: Element> Graph<T> {
    /// Normalizes each channel and applies the affine `gamma·x̂ + beta`.
    ///
    /// In train mode the statistics of this batch are returned so the caller
    /// can fold them into its running estimates; nothing is mutated here.
    pub fn batch_norm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &ChannelStats<T>,
        mode: NormMode,
        eps: T,
    ) -> Result<(Var, Option<ChannelStats<T>>)> {
        let (out, saved, stats) = forward(
            self.value(input),
            self.value(gamma).data(),
            self.value(beta).data(),
            running,
            mode,
            eps,
        )?;
        let var = self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
            &[input, gamma, beta],
        )?;
        Ok((var, stats))
    }
}
