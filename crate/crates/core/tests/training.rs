use cmi::activation::ActivationKind;
use cmi::data::{generate_synthetic, stratified_folds, Dataset, SynthSpec};
use cmi::inception::{cmi_preset, relu_assignment, ArchConfig, Network};
use cmi::sampler::sample_one;
use cmi::train::cv::{cross_validate, RunReport};
use cmi::train::metrics::{f1_score, macro_f1, weighted_f1, F1Average};
use cmi::train::report::{aggregate_reports, render_tables, CANONICAL_COLUMNS};
use cmi::train::trainer::{evaluate_model, train_model, TrainConfig, TrainStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_arch() -> ArchConfig {
    cmi_preset(1).unwrap().with_width(0.125).with_resolution(32, 32)
}

fn tiny_data(per_class: usize, seed: u64) -> Dataset {
    generate_synthetic(&SynthSpec {
        per_class,
        resolution: (32, 32),
        noise: 0.05,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

/// Per-class F1 from raw pair counts, without a confusion matrix.
fn brute_macro_f1(t: &[usize], p: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let tp = t.iter().zip(p).filter(|&(&a, &b)| a == c && b == c).count() as f64;
        let fp = t.iter().zip(p).filter(|&(&a, &b)| a != c && b == c).count() as f64;
        let fn_ = t.iter().zip(p).filter(|&(&a, &b)| a == c && b != c).count() as f64;
        total += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) };
    }
    total / k as f64
}

#[test]
fn macro_f1_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let k = rng.gen_range(2..6);
        let n = rng.gen_range(1..60);
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let got = macro_f1(&t, &p, k).unwrap();
        assert!((got - brute_macro_f1(&t, &p, k)).abs() < 1e-12);
    }
}

#[test]
fn hand_case() {
    assert!((macro_f1(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap() - 11.0 / 15.0).abs() < 1e-15);
}

#[test]
fn constant_prediction_on_balanced_classes_scores_a_tenth() {
    let t: Vec<usize> = (0..40).map(|i| i % 4).collect();
    let p = vec![2; 40];
    assert!((macro_f1(&t, &p, 4).unwrap() - 0.1).abs() < 1e-12);
    assert!((f1_score(&t, &t, 4, F1Average::Macro).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn weighted_f1_uses_support() {
    let t = [0, 0, 0, 1];
    let p = [0, 0, 0, 0];
    // class 0: 2*3/(6+1) = 6/7, class 1: 0
    assert!((weighted_f1(&t, &p, 2).unwrap() - 0.75 * 6.0 / 7.0).abs() < 1e-12);
    assert!(macro_f1(&[0, 5], &[0, 0], 2).is_err());
    assert!(macro_f1(&[0, 1], &[0], 2).is_err());
}

proptest! {
    #[test]
    fn f1_is_invariant_to_relabeling_and_duplication(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let base = macro_f1(&t, &p, 4).unwrap();
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
        let rt: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let rp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        prop_assert!((macro_f1(&rt, &rp, 4).unwrap() - base).abs() < 1e-12);
        let dt: Vec<usize> = t.iter().chain(&t).copied().collect();
        let dp: Vec<usize> = p.iter().chain(&p).copied().collect();
        prop_assert!((macro_f1(&dt, &dp, 4).unwrap() - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: 5,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let arch = tiny_arch();
    let data = tiny_data(4, 1);
    let mut net = Network::<f32>::build(&arch, relu_assignment(&arch), 2).unwrap();
    let before: Vec<Vec<f32>> = net.parameters().map(|t| t.data().to_vec()).collect();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..quick(2)
    };
    let out = train_model(&mut net, &data, &(0..16).collect::<Vec<_>>(), &cfg).unwrap();
    assert_eq!(out.status, TrainStatus::Completed);
    let after: Vec<Vec<f32>> = net.parameters().map(|t| t.data().to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn training_is_deterministic_for_fixed_seeds() {
    let arch = tiny_arch();
    let data = tiny_data(4, 2);
    let a = sample_one(arch.cb_count(), &ActivationKind::STANDARD_SET, 9).unwrap();
    let run = || {
        let mut net = Network::<f32>::build(&arch, a.clone(), 3).unwrap();
        let out = train_model(&mut net, &data, &(0..16).collect::<Vec<_>>(), &quick(2)).unwrap();
        let params: Vec<u32> = net.parameters().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect();
        (out.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), params)
    };
    assert_eq!(run(), run());
}

#[test]
fn held_out_samples_cannot_influence_training() {
    let arch = tiny_arch();
    let clean = tiny_data(4, 3);
    let mut poisoned = clean.clone();
    let train_idx: Vec<usize> = (0..16).filter(|i| i % 4 != 0).collect();
    for i in (0..16).filter(|i| i % 4 == 0) {
        poisoned.samples[i].image.data_mut().fill(f32::NAN);
    }
    let run = |data: &Dataset| {
        let mut net = Network::<f32>::build(&arch, relu_assignment(&arch), 4).unwrap();
        let out = train_model(&mut net, data, &train_idx, &quick(2)).unwrap();
        assert_eq!(out.status, TrainStatus::Completed);
        net.parameters().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(run(&clean), run(&poisoned));
}

#[test]
fn a_small_training_set_can_be_memorised() {
    let arch = tiny_arch();
    let data = tiny_data(2, 4);
    let idx: Vec<usize> = (0..8).collect();
    let mut net = Network::<f32>::build(&arch, relu_assignment(&arch), 6).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        ..quick(60)
    };
    let out = train_model(&mut net, &data, &idx, &cfg).unwrap();
    assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
    let eval = evaluate_model(&net, &data, &idx, 8, F1Average::Macro).unwrap();
    assert_eq!(eval.f1, 1.0, "predictions {:?}", eval.predictions);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(quick(0).validate().is_err());
    assert!(TrainConfig { batch_size: 0, ..quick(1) }.validate().is_err());
    assert!(TrainConfig { learning_rate: -1.0, ..quick(1) }.validate().is_err());
    assert!(TrainConfig { momentum: 1.0, ..quick(1) }.validate().is_err());
}

#[test]
fn cross_validation_covers_each_sample_once_and_repeats_exactly() {
    let arch = tiny_arch();
    let data = tiny_data(3, 5);
    let folds = stratified_folds(&data.labels(), 3, 1).unwrap();
    let a = sample_one(arch.cb_count(), &ActivationKind::STANDARD_SET, 2).unwrap();
    let r1 = cross_validate(&arch, &a, &data, &folds, &quick(1), 8).unwrap();
    let r2 = cross_validate(&arch, &a, &data, &folds, &quick(1), 8).unwrap();
    assert_eq!(r1.without_timing(), r2.without_timing());
    assert_eq!(r1.folds.len(), 3);
    assert_eq!(r1.arch, "CMI_1");
    let sum: f64 = r1.folds.iter().map(|f| f.t_test_seconds).sum();
    assert!((r1.t_test_seconds - sum).abs() < 1e-12);
    let valid: usize = (0..3).map(|f| folds.fold(f).len()).sum();
    assert_eq!(valid, data.len());
    let mean: f64 = r1.folds.iter().map(|f| f.f1_valid).sum::<f64>() / 3.0;
    assert!((r1.f1_valid - mean).abs() < 1e-12);
}

#[test]
fn mismatched_image_shape_is_rejected() {
    let arch = tiny_arch().with_resolution(48, 48);
    let data = tiny_data(3, 5);
    let folds = stratified_folds(&data.labels(), 3, 1).unwrap();
    assert!(cross_validate(&arch, &relu_assignment(&arch), &data, &folds, &quick(1), 0).is_err());
}

fn report(arch: &str, index: usize, f1_valid: f64, t: f64) -> RunReport {
    RunReport {
        arch: arch.into(),
        arch_config: tiny_arch(),
        multi_function: arch.starts_with("CMI"),
        model_index: index,
        assignment_seed: None,
        init_seed: 0,
        f1_train: 1.0,
        f1_valid,
        t_train_seconds: t,
        t_test_seconds: t / 10.0,
        parameter_count: 100,
        serialized_bytes: 464,
        failed: false,
        folds: vec![],
    }
}

#[test]
fn aggregation_picks_best_validation_with_low_index_ties() {
    let rs = [report("CMI_1", 0, 0.5, 1.0), report("CMI_1", 1, 0.7, 2.0), report("CMI_1", 2, 0.7, 6.0)];
    let agg = aggregate_reports(&rs).unwrap();
    assert_eq!(agg.best.model_index, 1);
    assert!((agg.mean.f1_valid - 1.9 / 3.0).abs() < 1e-12);
    assert!((agg.mean.t_train_seconds - 3.0).abs() < 1e-12);
    assert!(aggregate_reports(&[]).is_err());
}

#[test]
fn two_report_example() {
    let agg = aggregate_reports(&[report("MI", 0, 0.7, 1.0), report("MI", 1, 0.8, 1.0)]).unwrap();
    assert_eq!(agg.best.f1_valid, 0.8);
    assert!((agg.mean.f1_valid - 0.75).abs() < 1e-12);
}

#[test]
fn tables_always_show_the_canonical_columns() {
    let (md, best, mean) = render_tables(&[report("CMI_1", 0, 0.5, 1.0), report("I", 0, 0.4, 2.0)]).unwrap();
    let header = best.lines().next().unwrap();
    let cols: Vec<&str> = header.split(',').skip(1).collect();
    assert_eq!(cols, CANONICAL_COLUMNS);
    assert_eq!(best.lines().count(), 5);
    assert_eq!(mean.lines().count(), 5);
    let valid_row = best.lines().find(|l| l.starts_with("F1_valid")).unwrap();
    assert_eq!(valid_row.split(',').filter(|c| c.is_empty()).count(), 6);
    let md_row = md.lines().find(|l| l.starts_with("| F1_valid")).unwrap();
    assert_eq!(md_row.split('|').filter(|c| c.trim() == "-").count(), 6);
    assert!(md_row.contains("0.5000") && md_row.contains("0.4000"));
}
