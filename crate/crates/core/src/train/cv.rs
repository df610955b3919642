//! The cross-validation protocol and its per-run report.

use serde::{Deserialize, Serialize};

use super::trainer::{evaluate_model, train_model, Precision, TrainConfig, TrainStatus};
use crate::activation::ActivationAssignment;
use crate::data::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::inception::{arch_stats, ArchConfig, Network, NetworkPlan};
use crate::sampler::model_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub f1_train: f64,
    pub f1_valid: f64,
    pub t_train_seconds: f64,
    pub t_test_seconds: f64,
    pub loss_curve: Vec<f64>,
    pub status: TrainStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Table column label, e.g. `CMI_1` or `I`.
    pub arch: String,
    pub arch_config: ArchConfig,
    /// Whether the assignment mixes functions (false for uniform baselines).
    pub multi_function: bool,
    pub model_index: usize,
    pub assignment_seed: Option<u64>,
    pub init_seed: u64,
    /// Mean over folds of F1 on the training complement after training.
    pub f1_train: f64,
    /// Mean over folds of F1 on the held-out fold.
    pub f1_valid: f64,
    /// Summed over folds.
    pub t_train_seconds: f64,
    /// Summed over folds; covers predicting each held-out fold.
    pub t_test_seconds: f64,
    pub parameter_count: usize,
    pub serialized_bytes: usize,
    /// True when any fold diverged; such folds score 0.
    pub failed: bool,
    pub folds: Vec<FoldReport>,
}

impl RunReport {
    /// The report with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.t_train_seconds = 0.0;
        r.t_test_seconds = 0.0;
        for f in &mut r.folds {
            f.t_train_seconds = 0.0;
            f.t_test_seconds = 0.0;
        }
        r
    }
}

/// Trains a fresh network on each fold's complement and scores it on both
/// slices. Fold `f` initializes weights from `model_seed(init_seed, f)` and
/// shuffles from `model_seed(config.seed, f)`.
pub fn cross_validate(
    arch: &ArchConfig,
    assignment: &ActivationAssignment,
    data: &Dataset,
    folds: &FoldPlan,
    config: &TrainConfig,
    init_seed: u64,
) -> Result<RunReport> {
    config.validate()?;
    if folds.assignments.len() != data.len() {
        return Err(Error::Invalid(format!(
            "fold plan covers {} samples, dataset has {}",
            folds.assignments.len(),
            data.len()
        )));
    }
    if let Some((c, h, w)) = data.image_shape() {
        if c != arch.channels_in || (h, w) != arch.input_resolution {
            return Err(Error::Invalid(format!(
                "images are {c}x{h}x{w} but the architecture expects {}x{}x{}",
                arch.channels_in, arch.input_resolution.0, arch.input_resolution.1
            )));
        }
    }
    let mut reports = Vec::with_capacity(folds.num_folds);
    for f in 0..folds.num_folds {
        let train_idx = folds.complement(f);
        let valid_idx = folds.fold(f);
        if train_idx.is_empty() || valid_idx.is_empty() {
            return Err(Error::Invalid(format!("fold {f} leaves an empty slice")));
        }
        let fold_cfg = TrainConfig {
            seed: model_seed(config.seed, f),
            ..config.clone()
        };
        let seed = model_seed(init_seed, f);
        reports.push(match config.precision {
            Precision::F32 => run_fold::<f32>(arch, assignment, data, &train_idx, &valid_idx, &fold_cfg, seed, f)?,
            Precision::F64 => run_fold::<f64>(arch, assignment, data, &train_idx, &valid_idx, &fold_cfg, seed, f)?,
        });
    }
    let stats = arch_stats(&NetworkPlan::build(arch)?);
    let n = reports.len() as f64;
    let multi_function = assignment.entries.windows(2).any(|w| w[0] != w[1]);
    Ok(RunReport {
        arch: arch.label(multi_function),
        arch_config: arch.clone(),
        multi_function,
        model_index: 0,
        assignment_seed: assignment.seed,
        init_seed,
        f1_train: reports.iter().map(|r| r.f1_train).sum::<f64>() / n,
        f1_valid: reports.iter().map(|r| r.f1_valid).sum::<f64>() / n,
        t_train_seconds: reports.iter().map(|r| r.t_train_seconds).sum(),
        t_test_seconds: reports.iter().map(|r| r.t_test_seconds).sum(),
        parameter_count: stats.parameter_count,
        serialized_bytes: stats.serialized_bytes,
        failed: reports.iter().any(|r| r.status != TrainStatus::Completed),
        folds: reports,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fold<T: cmi_tensor::Element>(
    arch: &ArchConfig,
    assignment: &ActivationAssignment,
    data: &Dataset,
    train_idx: &[usize],
    valid_idx: &[usize],
    config: &TrainConfig,
    init_seed: u64,
    fold: usize,
) -> Result<FoldReport> {
    let mut net = Network::<T>::build(arch, assignment.clone(), init_seed)?;
    let outcome = train_model(&mut net, data, train_idx, config)?;
    if outcome.status != TrainStatus::Completed {
        return Ok(FoldReport {
            fold,
            f1_train: 0.0,
            f1_valid: 0.0,
            t_train_seconds: outcome.t_train_seconds,
            t_test_seconds: 0.0,
            loss_curve: outcome.loss_curve,
            status: outcome.status,
        });
    }
    let valid = evaluate_model(&net, data, valid_idx, config.batch_size, config.f1_average)?;
    let train = evaluate_model(&net, data, train_idx, config.batch_size, config.f1_average)?;
    Ok(FoldReport {
        fold,
        f1_train: train.f1,
        f1_valid: valid.f1,
        t_train_seconds: outcome.t_train_seconds,
        t_test_seconds: valid.t_test_seconds,
        loss_curve: outcome.loss_curve,
        status: outcome.status,
    })
}
