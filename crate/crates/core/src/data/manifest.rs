//! CSV manifests with a `path,label` header and an optional `group` column.
//!
//! Relative paths resolve against the manifest's directory. Class names are
//! the distinct labels, ordered numerically when every label is an integer
//! and lexicographically otherwise, unless an explicit list is supplied.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use cmi_tensor::Tensor;
use image::imageops::FilterType;
use image::DynamicImage;
use serde::Deserialize;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestOptions {
    /// Target `(height, width)`.
    pub resolution: (usize, usize),
    /// 1 (luminance) or 3 (RGB; grayscale sources are replicated).
    pub channels: usize,
    /// Fixes the class order and rejects labels outside it.
    pub class_names: Option<Vec<String>>,
}

impl ManifestOptions {
    pub fn new(resolution: (usize, usize)) -> Self {
        ManifestOptions {
            resolution,
            channels: 3,
            class_names: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    path: String,
    label: String,
    #[serde(default)]
    group: Option<String>,
}

fn class_order(labels: &[&str]) -> Vec<String> {
    let mut names: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
    names.sort();
    names.dedup();
    if names.iter().all(|n| n.parse::<i64>().is_ok()) {
        names.sort_by_key(|n| n.parse::<i64>().unwrap());
    }
    names
}

pub fn load_manifest(manifest: &Path, options: &ManifestOptions) -> Result<Dataset> {
    if !matches!(options.channels, 1 | 3) {
        return Err(Error::Invalid(format!("{} input channels are not supported", options.channels)));
    }
    let (h, w) = options.resolution;
    if h == 0 || w == 0 {
        return Err(Error::Invalid("target resolution must be positive".into()));
    }
    let file = std::fs::File::open(manifest).map_err(|e| Error::io(manifest, e))?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    for required in ["path", "label"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Invalid(format!(
                "{}: header must contain a `{required}` column",
                manifest.display()
            )));
        }
    }
    let rows: Vec<Row> = reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::ManifestRow {
                row: i + 1,
                path: String::new(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;

    let class_names = match &options.class_names {
        Some(names) => names.clone(),
        None => class_order(&rows.iter().map(|r| r.label.as_str()).collect::<Vec<_>>()),
    };
    let index: HashMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut seen: HashMap<PathBuf, (usize, &str)> = HashMap::new();
    let mut samples = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let row_no = i + 1;
        let fail = |reason: String| Error::ManifestRow {
            row: row_no,
            path: row.path.clone(),
            reason,
        };
        let label = *index
            .get(row.label.as_str())
            .ok_or_else(|| fail(format!("unknown label {:?}", row.label)))?;
        let path = base.join(&row.path);
        if let Some(&(first_row, first_label)) = seen.get(&path) {
            if first_label != row.label {
                return Err(fail(format!(
                    "also listed on row {first_row} with label {first_label:?}"
                )));
            }
        } else {
            seen.insert(path.clone(), (row_no, row.label.as_str()));
        }
        if !path.is_file() {
            return Err(fail("file not found".into()));
        }
        let img = image::open(&path).map_err(|e| fail(format!("unreadable image: {e}")))?;
        samples.push(Sample {
            image: to_tensor(&img, options.channels, (h, w)),
            label,
            source: row.path.clone(),
            group: row.group.clone().filter(|g| !g.is_empty()),
        });
    }
    Dataset::new(samples, class_names)
}

/// Bilinear resize to `(h, w)` at 16-bit depth, scaled to `[0, 1]`.
pub fn to_tensor(img: &DynamicImage, channels: usize, (h, w): (usize, usize)) -> Tensor<f32> {
    let gray = !img.color().has_color();
    let plane = h * w;
    let mut data = vec![0f32; channels * plane];
    if gray || channels == 1 {
        let luma = image::imageops::resize(&img.to_luma16(), w as u32, h as u32, FilterType::Triangle);
        for (i, p) in luma.pixels().enumerate() {
            let v = p.0[0] as f32 / 65535.0;
            for c in 0..channels {
                data[c * plane + i] = v;
            }
        }
    } else {
        let rgb = image::imageops::resize(&img.to_rgb16(), w as u32, h as u32, FilterType::Triangle);
        for (i, p) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * plane + i] = p.0[c] as f32 / 65535.0;
            }
        }
    }
    Tensor::new([channels, h, w], data).expect("shape matches buffer")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_labels_sort_numerically() {
        assert_eq!(class_order(&["10", "2", "2", "0"]), vec!["0", "2", "10"]);
        assert_eq!(class_order(&["b", "a", "c"]), vec!["a", "b", "c"]);
    }

    #[test]
    fn constant_image_resizes_to_the_same_constant() {
        let img = DynamicImage::ImageLuma16(image::ImageBuffer::from_pixel(17, 23, image::Luma([40000u16])));
        let t = to_tensor(&img, 3, (8, 5));
        assert_eq!(t.shape(), &[3, 8, 5]);
        assert!(t.data().iter().all(|&v| v == 40000.0 / 65535.0));
    }
}
