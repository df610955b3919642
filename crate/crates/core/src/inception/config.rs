use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_INCEPTION_A: usize = 4;
pub const MAX_INCEPTION_B: usize = 7;
pub const MAX_INCEPTION_C: usize = 3;
/// Compressed configurations must satisfy `k + m + n < MAX_TOTAL_BLOCKS`.
pub const MAX_TOTAL_BLOCKS: usize = 14;

/// Convolutional blocks in the stem and both reduction segments.
pub const FIXED_SEGMENT_CBS: usize = 11 + 4 + 6;

/// Smallest input extent that leaves every one of the five stride-2 stages
/// with at least two rows and columns to reduce.
pub const MIN_INPUT_EXTENT: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Compressed,
    Full,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Compressed => "compressed",
            Mode::Full => "full",
        })
    }
}

/// Block counts plus the knobs that scale a network down to desk size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Inception-A blocks.
    pub k: usize,
    /// Inception-B blocks.
    pub m: usize,
    /// Inception-C blocks.
    pub n: usize,
    pub mode: Mode,
    pub width_multiplier: f64,
    pub input_resolution: (usize, usize),
    pub channels_in: usize,
    pub num_classes: usize,
    pub batchnorm: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            k: 4,
            m: 7,
            n: 3,
            mode: Mode::Full,
            width_multiplier: 1.0,
            input_resolution: (299, 299),
            channels_in: 3,
            num_classes: 4,
            batchnorm: true,
        }
    }
}

impl ArchConfig {
    pub fn compressed(k: usize, m: usize, n: usize) -> Self {
        ArchConfig {
            k,
            m,
            n,
            mode: Mode::Compressed,
            ..ArchConfig::default()
        }
    }

    /// The uncompressed (4, 7, 3) topology.
    pub fn full() -> Self {
        ArchConfig::default()
    }

    pub fn with_width(mut self, width_multiplier: f64) -> Self {
        self.width_multiplier = width_multiplier;
        self
    }

    pub fn with_resolution(mut self, height: usize, width: usize) -> Self {
        self.input_resolution = (height, width);
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn with_batchnorm(mut self, enabled: bool) -> Self {
        self.batchnorm = enabled;
        self
    }

    pub fn with_channels_in(mut self, channels: usize) -> Self {
        self.channels_in = channels;
        self
    }

    pub fn cb_count(&self) -> usize {
        cb_count(self.k, self.m, self.n)
    }

    /// Channel count after width scaling, never below 1.
    pub fn scale_channels(&self, reference: usize) -> usize {
        ((reference as f64 * self.width_multiplier).floor() as usize).max(1)
    }

    /// Column label in the style of the result tables: `CMI_1` / `CI_1`,
    /// `MI` / `I`, or `CMI(k,m,n)` / `CI(k,m,n)`.
    pub fn label(&self, multi_function: bool) -> String {
        if self.mode == Mode::Full {
            return if multi_function { "MI" } else { "I" }.to_string();
        }
        let prefix = if multi_function { "CMI" } else { "CI" };
        match preset_index(self.k, self.m, self.n) {
            Some(i) => format!("{prefix}_{i}"),
            None => format!("{prefix}({},{},{})", self.k, self.m, self.n),
        }
    }

    /// Short identifier for file names: `cmi1`, `mi`, `k1m1n1`.
    pub fn id(&self) -> String {
        if self.mode == Mode::Full {
            return "mi".to_string();
        }
        match preset_index(self.k, self.m, self.n) {
            Some(i) => format!("cmi{i}"),
            None => format!("k{}m{}n{}", self.k, self.m, self.n),
        }
    }
}

fn preset_index(k: usize, m: usize, n: usize) -> Option<usize> {
    (1..=3).find(|&i| (k, m, n) == (i, i + 1, i))
}

/// Convolutional blocks in a network with `k`, `m`, `n` Inception-A/B/C blocks:
/// stem 11, each A 7, reduction-A 4, each B 10, reduction-B 6, each C 10.
pub fn cb_count(k: usize, m: usize, n: usize) -> usize {
    FIXED_SEGMENT_CBS + 7 * k + 10 * m + 10 * n
}

/// One broken constraint of an [`ArchConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Every constraint the configuration breaks; empty when it is legal.
pub fn validate_config(config: &ArchConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let ArchConfig { k, m, n, .. } = *config;
    match config.mode {
        Mode::Compressed => {
            if !(1..=MAX_INCEPTION_A).contains(&k) {
                out.push(Violation::new("k", format!("k ∉ {{1..{MAX_INCEPTION_A}}} (got {k})")));
            }
            if !(1..=MAX_INCEPTION_B).contains(&m) {
                out.push(Violation::new("m", format!("m ∉ {{1..{MAX_INCEPTION_B}}} (got {m})")));
            }
            if !(1..=MAX_INCEPTION_C).contains(&n) {
                out.push(Violation::new("n", format!("n ∉ {{1..{MAX_INCEPTION_C}}} (got {n})")));
            }
            if k + m + n >= MAX_TOTAL_BLOCKS {
                out.push(Violation::new(
                    "k+m+n",
                    format!("k+m+n must be < {MAX_TOTAL_BLOCKS} (got {})", k + m + n),
                ));
            }
        }
        Mode::Full => {
            if (k, m, n) != (MAX_INCEPTION_A, MAX_INCEPTION_B, MAX_INCEPTION_C) {
                out.push(Violation::new(
                    "mode",
                    format!("full mode requires (k,m,n) = (4,7,3), got ({k},{m},{n})"),
                ));
            }
        }
    }
    let w = config.width_multiplier;
    if !(w > 0.0 && w <= 1.0) {
        out.push(Violation::new("width_multiplier", format!("width multiplier must lie in (0, 1], got {w}")));
    }
    let (h, w) = config.input_resolution;
    if h < MIN_INPUT_EXTENT || w < MIN_INPUT_EXTENT {
        out.push(Violation::new(
            "input_resolution",
            format!(
                "input resolution {h}x{w} is below the minimum {MIN_INPUT_EXTENT}x{MIN_INPUT_EXTENT} \
                 needed by the five stride-2 stages"
            ),
        ));
    }
    if config.channels_in == 0 {
        out.push(Violation::new("channels_in", "at least one input channel is required"));
    }
    if config.num_classes == 0 {
        out.push(Violation::new("num_classes", "at least one class is required"));
    }
    out
}

pub fn ensure_valid(config: &ArchConfig) -> Result<()> {
    let violations = validate_config(config);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(violations))
    }
}

/// `(i, i+1, i)` in compressed mode, for `i ∈ {1, 2, 3}`.
pub fn cmi_preset(i: usize) -> Result<ArchConfig> {
    if !(1..=3).contains(&i) {
        return Err(Error::Invalid(format!("CMI preset index must be 1, 2 or 3, got {i}")));
    }
    Ok(ArchConfig::compressed(i, i + 1, i))
}

/// Resolves `cmi1`, `cmi2`, `cmi3` or `mi` (case-insensitive).
pub fn preset(name: &str) -> Result<ArchConfig> {
    match name.to_ascii_lowercase().as_str() {
        "mi" | "full" => Ok(ArchConfig::full()),
        other => other
            .strip_prefix("cmi")
            .and_then(|i| i.parse().ok())
            .map(cmi_preset)
            .unwrap_or_else(|| Err(Error::Invalid(format!("unknown architecture preset {name:?}")))),
    }
}

/// All legal compressed `(k, m, n)` triples in lexicographic order.
pub fn legal_compressed_triples() -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for k in 1..=MAX_INCEPTION_A {
        for m in 1..=MAX_INCEPTION_B {
            for n in 1..=MAX_INCEPTION_C {
                if k + m + n < MAX_TOTAL_BLOCKS {
                    out.push((k, m, n));
                }
            }
        }
    }
    out
}
