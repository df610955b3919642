//! Seeded random activation assignments, one per model.
//!
//! Model `j` of a plan draws from its own stream seeded with
//! [`model_seed`]`(base_seed, j)`, so adding models never changes existing
//! ones.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationAssignment, ActivationKind, Granularity};
use crate::error::{Error, Result};
use crate::inception::{ensure_valid, ArchConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub arch: ArchConfig,
    pub num_models: usize,
    pub base_seed: u64,
    pub activation_set: Vec<ActivationKind>,
}

impl SamplePlan {
    pub fn new(arch: ArchConfig, num_models: usize, base_seed: u64) -> Self {
        SamplePlan {
            arch,
            num_models,
            base_seed,
            activation_set: ActivationKind::STANDARD_SET.to_vec(),
        }
    }

    pub fn with_set(mut self, set: Vec<ActivationKind>) -> Self {
        self.activation_set = set;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_valid(&self.arch)?;
        if self.num_models == 0 {
            return Err(Error::Invalid("at least one model must be sampled".into()));
        }
        validate_set(&self.activation_set)
    }
}

pub fn validate_set(set: &[ActivationKind]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Invalid("activation set is empty".into()));
    }
    for (i, a) in set.iter().enumerate() {
        if set[..i].contains(a) {
            return Err(Error::Invalid(format!("activation set lists {a} twice")));
        }
    }
    Ok(())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(base_seed ⊕ splitmix64(model_index))`.
pub fn model_seed(base_seed: u64, model_index: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(model_index as u64))
}

/// One per-block assignment drawn uniformly from `set` with `seed`.
pub fn sample_one(cb_count: usize, set: &[ActivationKind], seed: u64) -> Result<ActivationAssignment> {
    validate_set(set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..cb_count).map(|_| set[rng.gen_range(0..set.len())]).collect();
    Ok(ActivationAssignment {
        granularity: Granularity::PerBlock,
        seed: Some(seed),
        entries,
    })
}

pub fn sample_assignments(plan: &SamplePlan) -> Result<Vec<ActivationAssignment>> {
    plan.validate()?;
    let cbs = plan.arch.cb_count();
    (0..plan.num_models)
        .map(|j| sample_one(cbs, &plan.activation_set, model_seed(plan.base_seed, j)))
        .collect()
}

/// Every block gets `kind`: the uniform baselines.
pub fn baseline_assignment(arch: &ArchConfig, kind: ActivationKind) -> ActivationAssignment {
    ActivationAssignment::uniform(kind, Granularity::PerBlock, arch.cb_count())
}

pub fn assignment_file_name(arch: &ArchConfig, model_index: usize, seed: u64) -> String {
    format!("{}_model{model_index:02}_seed{seed}.json", arch.id())
}

/// Writes one JSON file per assignment into `dir`, returning the paths.
pub fn write_assignments(dir: &Path, arch: &ArchConfig, assignments: &[ActivationAssignment]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    assignments
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let path = dir.join(assignment_file_name(arch, j, a.seed.unwrap_or(0)));
            let mut text = a.to_json()?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
