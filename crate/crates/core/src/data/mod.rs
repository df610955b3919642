//! Labeled image datasets, their loaders and fold partitions.

pub mod folds;
pub mod manifest;
pub mod synthetic;

use cmi_tensor::{Element, Tensor};

use crate::error::{Error, Result};

pub use folds::{stratified_folds, stratified_folds_grouped, FoldPlan};
pub use manifest::{load_manifest, ManifestOptions};
pub use synthetic::{generate_synthetic, write_synthetic, SynthSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[C, H, W]` with values in `[0, 1]`.
    pub image: Tensor<f32>,
    pub label: usize,
    /// Where the image came from (a path, or a synthetic id).
    pub source: String,
    /// Samples sharing a group are kept in one fold.
    pub group: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Checks that every image has shape `[C, H, W]` and every label is in range.
    pub fn new(samples: Vec<Sample>, class_names: Vec<String>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let shape = first.image.shape().to_vec();
            if shape.len() != 3 {
                return Err(Error::Invalid(format!("images must be [C,H,W], got {shape:?}")));
            }
            for s in &samples {
                if s.image.shape() != shape {
                    return Err(Error::Invalid(format!(
                        "{}: shape {:?} differs from {shape:?}",
                        s.source,
                        s.image.shape()
                    )));
                }
                if s.label >= class_names.len() {
                    return Err(Error::Invalid(format!(
                        "{}: label {} outside {} classes",
                        s.source,
                        s.label,
                        class_names.len()
                    )));
                }
            }
        }
        Ok(Dataset { samples, class_names })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn groups(&self) -> Vec<Option<String>> {
        self.samples.iter().map(|s| s.group.clone()).collect()
    }

    /// `(C, H, W)` of the images, if any.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| {
            let d = s.image.shape();
            (d[0], d[1], d[2])
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Stacks the selected images into `[N, C, H, W]` with their labels.
    pub fn batch<T: Element>(&self, indices: &[usize]) -> Result<(Tensor<T>, Vec<usize>)> {
        let (c, h, w) = self.image_shape().ok_or_else(|| Error::Invalid("empty dataset".into()))?;
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| Error::Invalid(format!("sample index {i} out of range")))?;
            data.extend(s.image.data().iter().map(|&v| T::of(v as f64)));
            labels.push(s.label);
        }
        Ok((Tensor::new([indices.len(), c, h, w], data)?, labels))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }
}
