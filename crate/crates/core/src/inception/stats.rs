//! Parameter, FLOP and checkpoint-size accounting.

use serde::{Deserialize, Serialize};

use super::checkpoint::header_bytes;
use super::config::Mode;
use super::plan::NetworkPlan;
use crate::activation::Granularity;

/// Element width used for size reporting.
pub const STORED_ELEMENT_BYTES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchStats {
    pub cb_count: usize,
    pub activation_count: usize,
    /// Every stored value: weights, biases, normalization scales and shifts,
    /// and normalization running statistics.
    pub parameter_count: usize,
    /// The subset updated by the optimizer.
    pub trainable_count: usize,
    /// Multiply-accumulates of all convolutions and the classifier, per image.
    pub flops_per_image: u64,
    pub serialized_bytes: usize,
}

/// Accounting for a per-block assignment and 32-bit storage.
pub fn arch_stats(plan: &NetworkPlan) -> ArchStats {
    arch_stats_with(plan, Granularity::PerBlock, STORED_ELEMENT_BYTES)
}

pub fn arch_stats_with(plan: &NetworkPlan, granularity: Granularity, element_bytes: usize) -> ArchStats {
    let bn = plan.config.batchnorm;
    let mut parameter_count = 0;
    let mut trainable_count = 0;
    let mut flops = 0u64;
    let convs = plan.convs();
    for c in &convs {
        let weights = c.kernel.0 * c.kernel.1 * c.in_channels * c.out_channels;
        let (trainable, buffers) = if bn { (2 * c.out_channels, 2 * c.out_channels) } else { (c.out_channels, 0) };
        trainable_count += weights + trainable;
        parameter_count += weights + trainable + buffers;
        flops += c.macs();
    }
    let head = plan.feature_channels * plan.config.num_classes;
    trainable_count += head + plan.config.num_classes;
    parameter_count += head + plan.config.num_classes;
    flops += head as u64;
    let entries = match granularity {
        Granularity::PerBlock => convs.len(),
        Granularity::PerFeatureMap => convs.iter().map(|c| c.out_channels).sum(),
    };
    ArchStats {
        cb_count: convs.len(),
        activation_count: convs.len(),
        parameter_count,
        trainable_count,
        flops_per_image: flops,
        serialized_bytes: parameter_count * element_bytes + header_bytes(entries),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCount {
    pub segment: String,
    pub copies: usize,
    pub cb_count: usize,
}

/// The architecture summary document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSummary {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub mode: Mode,
    pub width_multiplier: f64,
    pub input_resolution: (usize, usize),
    pub cb_count: usize,
    pub activation_count: usize,
    pub parameter_count: usize,
    pub trainable_count: usize,
    pub flops_per_image: u64,
    pub serialized_bytes: usize,
    pub per_segment_cb_counts: Vec<SegmentCount>,
}

pub fn summarize(plan: &NetworkPlan) -> ArchSummary {
    let stats = arch_stats(plan);
    let c = &plan.config;
    let per_segment_cb_counts = plan
        .per_segment_cb_counts()
        .into_iter()
        .map(|(kind, cb_count)| SegmentCount {
            segment: kind.name().to_string(),
            copies: plan.segments.iter().filter(|s| s.kind == kind).count(),
            cb_count,
        })
        .collect();
    ArchSummary {
        k: c.k,
        m: c.m,
        n: c.n,
        mode: c.mode,
        width_multiplier: c.width_multiplier,
        input_resolution: c.input_resolution,
        cb_count: stats.cb_count,
        activation_count: stats.activation_count,
        parameter_count: stats.parameter_count,
        trainable_count: stats.trainable_count,
        flops_per_image: stats.flops_per_image,
        serialized_bytes: stats.serialized_bytes,
        per_segment_cb_counts,
    }
}
