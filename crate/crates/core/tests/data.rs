use std::collections::BTreeMap;
use std::path::Path;

use cmi::data::{
    generate_synthetic, load_manifest, stratified_folds, stratified_folds_grouped, write_synthetic, ManifestOptions,
    SynthSpec,
};
use image::{GrayImage, Luma, Rgb, RgbImage};
use proptest::prelude::*;

fn write_gray(dir: &Path, name: &str, value: u8, size: u32) {
    GrayImage::from_pixel(size, size, Luma([value])).save(dir.join(name)).unwrap();
}

#[test]
fn four_row_manifest_loads_with_sorted_classes() {
    let dir = tempfile::tempdir().unwrap();
    write_gray(dir.path(), "a.png", 0, 8);
    write_gray(dir.path(), "b.png", 255, 16);
    RgbImage::from_pixel(12, 12, Rgb([255, 0, 51])).save(dir.path().join("c.png")).unwrap();
    write_gray(dir.path(), "d.png", 102, 8);
    std::fs::write(dir.path().join("m.csv"), "path,label\na.png,rot\nb.png,healthy\nc.png,rot\nd.png,blight\n").unwrap();
    let ds = load_manifest(&dir.path().join("m.csv"), &ManifestOptions::new((8, 8))).unwrap();
    assert_eq!(ds.class_names, ["blight", "healthy", "rot"]);
    assert_eq!(ds.labels(), [2, 1, 2, 0]);
    assert_eq!(ds.image_shape(), Some((3, 8, 8)));
    let s = &ds.samples;
    assert!(s[0].image.data().iter().all(|&v| v == 0.0));
    assert!(s[1].image.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    // constant colour survives resampling, channel planes kept apart
    let c = s[2].image.data();
    assert!(c[..64].iter().all(|&v| (v - 1.0).abs() < 1e-4));
    assert!(c[64..128].iter().all(|&v| v.abs() < 1e-4));
    assert!(c[128..].iter().all(|&v| (v - 0.2).abs() < 1e-4));
    assert!(s[3].image.data().iter().all(|&v| (v - 0.4).abs() < 1e-4));
}

#[test]
fn integer_labels_sort_numerically() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        write_gray(dir.path(), &format!("{i}.png"), 9, 4);
    }
    std::fs::write(dir.path().join("m.csv"), "path,label\n0.png,10\n1.png,2\n2.png,1\n").unwrap();
    let ds = load_manifest(&dir.path().join("m.csv"), &ManifestOptions::new((4, 4))).unwrap();
    assert_eq!(ds.class_names, ["1", "2", "10"]);
    assert_eq!(ds.labels(), [2, 1, 0]);
}

#[test]
fn manifest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    write_gray(dir.path(), "a.png", 9, 4);
    let m = dir.path().join("m.csv");
    std::fs::write(&m, "path,label\na.png,x\na.png,y\n").unwrap();
    let err = load_manifest(&m, &ManifestOptions::new((4, 4))).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("a.png"), "{err}");

    std::fs::write(&m, "path,label\na.png,x\nmissing.png,x\n").unwrap();
    let err = load_manifest(&m, &ManifestOptions::new((4, 4))).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("missing.png"), "{err}");

    std::fs::write(dir.path().join("junk.png"), b"not an image").unwrap();
    std::fs::write(&m, "path,label\njunk.png,x\n").unwrap();
    assert!(load_manifest(&m, &ManifestOptions::new((4, 4))).is_err());

    std::fs::write(&m, "path,label\na.png,z\n").unwrap();
    let opts = ManifestOptions {
        class_names: Some(vec!["x".into()]),
        ..ManifestOptions::new((4, 4))
    };
    let err = load_manifest(&m, &opts).unwrap_err().to_string();
    assert!(err.contains("row 1"), "{err}");
}

#[test]
fn synthetic_round_trips_through_png_and_manifest() {
    let spec = SynthSpec {
        per_class: 3,
        resolution: (16, 16),
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic(&ds, dir.path()).unwrap();
    let back = load_manifest(&manifest, &ManifestOptions::new((16, 16))).unwrap();
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.class_names, ds.class_names);
    for (a, b) in ds.samples.iter().zip(&back.samples) {
        for (x, y) in a.image.data().iter().zip(b.image.data()) {
            // 16-bit quantization
            assert!((x - y).abs() <= 1.0 / 65535.0 + 1e-6);
        }
    }
}

#[test]
fn noise_free_synthetic_classes_are_centroid_separable() {
    let spec = SynthSpec {
        per_class: 20,
        noise: 0.0,
        seed: 3,
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec).unwrap();
    let k = ds.num_classes();
    let dim = ds.samples[0].image.numel();
    // centroids from even-indexed samples, classify odd ones
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for s in ds.samples.iter().step_by(2) {
        counts[s.label] += 1;
        for (a, &v) in sums[s.label].iter_mut().zip(s.image.data()) {
            *a += v as f64;
        }
    }
    let (mut right, mut total) = (0, 0);
    for s in ds.samples.iter().skip(1).step_by(2) {
        let best = (0..k)
            .min_by(|&a, &b| {
                let d = |c: usize| {
                    sums[c].iter().zip(s.image.data()).map(|(m, &v)| (m / counts[c] as f64 - v as f64).powi(2)).sum::<f64>()
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        right += (best == s.label) as usize;
        total += 1;
    }
    assert!(right as f64 / total as f64 >= 0.9, "{right}/{total}");
}

#[test]
fn worked_fold_example() {
    let labels: Vec<usize> = [111, 149, 108, 68].iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
    assert_eq!(labels.len(), 436);
    let plan = stratified_folds(&labels, 3, 11).unwrap();
    assert_eq!(plan.fold_sizes(), [146, 145, 145]);
    assert_eq!(plan, stratified_folds(&labels, 3, 11).unwrap());
}

#[test]
fn small_classes_warn_and_bad_fold_counts_fail() {
    let plan = stratified_folds(&[0, 0, 0, 1], 3, 0).unwrap();
    assert_eq!(plan.warnings.len(), 1);
    assert!(stratified_folds(&[0, 1], 3, 0).is_err());
    assert!(stratified_folds(&[0, 1, 1], 1, 0).is_err());
}

#[test]
fn groups_never_straddle_folds() {
    let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let groups: Vec<Option<String>> = (0..60).map(|i| if i < 30 { Some(format!("g{}", i / 3)) } else { None }).collect();
    let plan = stratified_folds_grouped(&labels, &groups, 3, 4).unwrap();
    let mut fold_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        if let Some(g) = g {
            let f = *fold_of.entry(g).or_insert(plan.assignments[i]);
            assert_eq!(f, plan.assignments[i]);
        }
    }
    let sizes = plan.fold_sizes();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 3, "{sizes:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn folds_partition_and_stratify(
        counts in prop::collection::vec(3usize..40, 1..6),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
        prop_assume!(labels.len() >= k);
        let plan = stratified_folds(&labels, k, seed).unwrap();
        prop_assert_eq!(plan.assignments.len(), labels.len());
        let mut seen = vec![0usize; labels.len()];
        for f in 0..k {
            for i in plan.fold(f) {
                seen[i] += 1;
            }
            let train = plan.complement(f);
            prop_assert!(train.iter().all(|&i| plan.assignments[i] != f));
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        for (c, &n) in counts.iter().enumerate() {
            for f in 0..k {
                let in_fold = plan.fold(f).iter().filter(|&&i| labels[i] == c).count();
                prop_assert!(in_fold == n / k || in_fold == n.div_ceil(k), "class {} fold {}: {}", c, f, in_fold);
            }
        }
        let sizes = plan.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
