//! Synthetic oriented-texture images, one pattern family per class.
//!
//! Class `c` of `K` combines a linear ramp pointing at angle `2πc/K` with a
//! sinusoidal grating at angle `πc/K` and `c + 2` cycles across the image.
//! Each image gets a random grating phase and additive Gaussian noise.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cmi_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub resolution: (usize, usize),
    pub channels: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 4,
            per_class: 30,
            resolution: (64, 64),
            channels: 3,
            noise: 0.1,
            seed: 0,
        }
    }
}

pub fn class_name(c: usize) -> String {
    format!("class_{c:02}")
}

/// Samples are ordered class by class.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    let (h, w) = spec.resolution;
    if spec.num_classes == 0 || spec.per_class == 0 || h == 0 || w == 0 || spec.channels == 0 {
        return Err(Error::Invalid("synthetic dataset counts and extents must be at least 1".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Invalid(format!("noise must be a finite non-negative value, got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let k = spec.num_classes as f64;
    let mut samples = Vec::with_capacity(spec.num_classes * spec.per_class);
    for c in 0..spec.num_classes {
        let ramp_angle = 2.0 * PI * c as f64 / k;
        let grating_angle = PI * c as f64 / k;
        let cycles = (c + 2) as f64;
        for i in 0..spec.per_class {
            let phase = rng.gen::<f64>() * 2.0 * PI;
            let mut plane = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let u = 2.0 * x as f64 / (w.max(2) - 1) as f64 - 1.0;
                    let v = 2.0 * y as f64 / (h.max(2) - 1) as f64 - 1.0;
                    let ramp = u * ramp_angle.cos() + v * ramp_angle.sin();
                    let t = (u * grating_angle.cos() + v * grating_angle.sin()) * 0.5;
                    let grating = (2.0 * PI * cycles * t + phase).sin();
                    let mut p = 0.5 + 0.2 * ramp + 0.2 * grating;
                    if spec.noise > 0.0 {
                        p += noise.sample(&mut rng);
                    }
                    plane.push(p.clamp(0.0, 1.0) as f32);
                }
            }
            let data = plane.repeat(spec.channels);
            samples.push(Sample {
                image: Tensor::new([spec.channels, h, w], data)?,
                label: c,
                source: format!("synthetic/{}/{i:04}", class_name(c)),
                group: None,
            });
        }
    }
    Dataset::new(samples, (0..spec.num_classes).map(class_name).collect())
}

/// Writes the dataset as 16-bit grayscale PNGs plus `manifest.csv` into
/// `dir`, returning the manifest path. Only the first channel is stored.
pub fn write_synthetic(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = dir.join("manifest.csv");
    let mut out = csv::Writer::from_path(&manifest)?;
    out.write_record(["path", "label"])?;
    for (i, s) in dataset.samples.iter().enumerate() {
        let [_, h, w] = [s.image.shape()[0], s.image.shape()[1], s.image.shape()[2]];
        let pixels: Vec<u16> = s.image.data()[..h * w]
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let name = format!("{i:05}_{}.png", dataset.class_names[s.label]);
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w as u32, h as u32, pixels)
            .expect("buffer matches extent");
        let path = dir.join(&name);
        img.save(&path)?;
        out.write_record([name.as_str(), dataset.class_names[s.label].as_str()])?;
    }
    out.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
