//! Multi-architecture, multi-model experiment sweeps.
//!
//! Every job is one `(architecture, assignment, model index)` triple run
//! through [`cross_validate`]. Reports land in the output directory as
//! `<arch id>_model<NN>_seed<S>.json`; a job whose file already exists is
//! skipped, so an interrupted sweep resumes where it stopped.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationAssignment, ActivationKind};
use crate::data::{generate_synthetic, load_manifest, stratified_folds_grouped, Dataset, ManifestOptions, SynthSpec};
use crate::error::{Error, Result};
use crate::inception::{ensure_valid, preset, ArchConfig, Mode};
use crate::sampler::{baseline_assignment, model_seed, sample_one, validate_set};
use crate::train::{cross_validate, RunReport, TrainConfig};

/// A preset name (`cmi1`, `cmi2`, `cmi3`, `mi`) or explicit block counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchSpec {
    Preset(String),
    Counts { k: usize, m: usize, n: usize },
}

impl ArchSpec {
    pub fn resolve(&self) -> Result<ArchConfig> {
        match self {
            ArchSpec::Preset(name) => preset(name),
            ArchSpec::Counts { k, m, n } => {
                let mut c = ArchConfig::compressed(*k, *m, *n);
                if (*k, *m, *n) == (4, 7, 3) {
                    c.mode = Mode::Full;
                }
                Ok(c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Manifest { path: PathBuf },
    Synthetic(SynthSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub architectures: Vec<ArchSpec>,
    pub num_models: usize,
    #[serde(default = "standard_set")]
    pub activation_set: Vec<ActivationKind>,
    /// Also run all-RELU baselines with the same initialization seeds.
    #[serde(default = "yes")]
    pub baselines: bool,
    #[serde(default = "unit_width")]
    pub width_multiplier: f64,
    pub resolution: (usize, usize),
    #[serde(default = "three")]
    pub channels: usize,
    #[serde(default)]
    pub batchnorm_disabled: bool,
    #[serde(default)]
    pub train: TrainConfig,
    pub dataset: DatasetSource,
    #[serde(default = "three")]
    pub folds: usize,
    #[serde(default)]
    pub fold_seed: u64,
    #[serde(default)]
    pub sample_seed: u64,
    #[serde(default)]
    pub init_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
}

fn standard_set() -> Vec<ActivationKind> {
    ActivationKind::STANDARD_SET.to_vec()
}
fn yes() -> bool {
    true
}
fn unit_width() -> f64 {
    1.0
}
fn three() -> usize {
    3
}
fn one() -> usize {
    1
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Resolved architectures with the sweep's desk-scale knobs applied.
    pub fn arch_configs(&self, num_classes: usize) -> Result<Vec<ArchConfig>> {
        self.architectures
            .iter()
            .map(|a| {
                let c = a
                    .resolve()?
                    .with_width(self.width_multiplier)
                    .with_resolution(self.resolution.0, self.resolution.1)
                    .with_channels_in(self.channels)
                    .with_classes(num_classes)
                    .with_batchnorm(!self.batchnorm_disabled);
                ensure_valid(&c)?;
                Ok(c)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty() {
            return Err(Error::Invalid("architectures: at least one is required".into()));
        }
        if self.num_models == 0 {
            return Err(Error::Invalid("num_models: must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Invalid("workers: must be at least 1".into()));
        }
        validate_set(&self.activation_set).map_err(|e| Error::Invalid(format!("activation_set: {e}")))?;
        self.train.validate().map_err(|e| Error::Invalid(format!("train: {e}")))?;
        for a in &self.architectures {
            a.resolve()?;
        }
        self.arch_configs(1).map(|_| ())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                let spec = SynthSpec {
                    resolution: self.resolution,
                    channels: self.channels,
                    ..spec.clone()
                };
                generate_synthetic(&spec)
            }
            DatasetSource::Manifest { path } => {
                let options = ManifestOptions {
                    resolution: self.resolution,
                    channels: self.channels,
                    class_names: None,
                };
                load_manifest(path, &options)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Job {
    pub arch: ArchConfig,
    pub assignment: ActivationAssignment,
    pub model_index: usize,
    pub init_seed: u64,
    pub file_name: String,
}

/// Jobs in a fixed order: per architecture, the sampled models then the
/// baselines. Model `j` of every architecture initializes from
/// `model_seed(init_seed, j)`, baselines included.
pub fn plan_jobs(config: &SweepConfig, num_classes: usize) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for arch in config.arch_configs(num_classes)? {
        for j in 0..config.num_models {
            let init_seed = model_seed(config.init_seed, j);
            let a = sample_one(arch.cb_count(), &config.activation_set, model_seed(config.sample_seed, j))?;
            let seed = a.seed.unwrap_or(0);
            jobs.push(Job {
                file_name: format!("{}_model{j:02}_seed{seed}.json", arch.label(true).to_lowercase()),
                arch: arch.clone(),
                assignment: a,
                model_index: j,
                init_seed,
            });
            if config.baselines {
                jobs.push(Job {
                    file_name: format!("{}_model{j:02}_seed{init_seed}.json", arch.label(false).to_lowercase()),
                    arch: arch.clone(),
                    assignment: baseline_assignment(&arch, ActivationKind::Relu),
                    model_index: j,
                    init_seed,
                });
            }
        }
    }
    Ok(jobs)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub ran: Vec<PathBuf>,
    pub skipped: Vec<PathBuf>,
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepSummary> {
    config.validate()?;
    let data = config.load_dataset()?;
    let folds = stratified_folds_grouped(&data.labels(), &data.groups(), config.folds, config.fold_seed)?;
    let jobs = plan_jobs(config, data.num_classes())?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (done, todo): (Vec<_>, Vec<_>) = jobs.into_iter().partition(|j| dir.join(&j.file_name).is_file());
    let run = |job: &Job| -> Result<PathBuf> {
        log::info!("running {}", job.file_name);
        let mut report: RunReport =
            cross_validate(&job.arch, &job.assignment, &data, &folds, &config.train, job.init_seed)?;
        report.model_index = job.model_index;
        report.multi_function = job.assignment.seed.is_some();
        report.arch = job.arch.label(report.multi_function);
        let path = dir.join(&job.file_name);
        let tmp = path.with_extension("json.partial");
        let text = serde_json::to_string_pretty(&report)? + "\n";
        std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    };
    let ran = if config.workers == 1 {
        todo.iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?;
        pool.install(|| todo.par_iter().map(run).collect::<Result<Vec<_>>>())?
    };
    Ok(SweepSummary {
        ran,
        skipped: done.iter().map(|j| dir.join(&j.file_name)).collect(),
    })
}
