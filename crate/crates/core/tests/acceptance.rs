//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cmi::activation::ActivationKind;
use cmi::data::{generate_synthetic, stratified_folds, SynthSpec};
use cmi::gradcheck::{network_check, op_suites};
use cmi::inception::checkpoint::header_bytes;
use cmi::inception::config::legal_compressed_triples;
use cmi::inception::plan::Layer;
use cmi::inception::{
    arch_stats, cb_count, cmi_preset, relu_assignment, serialize_model, validate_config, ArchConfig, Network,
    NetworkPlan, Phase,
};
use cmi::sampler::{sample_assignments, sample_one, write_assignments, SamplePlan};
use cmi::sweep::{run_sweep, SweepConfig};
use cmi::train::metrics::{macro_f1, F1Average};
use cmi::train::report::{read_reports, render_tables, CANONICAL_COLUMNS};
use cmi::train::trainer::{evaluate_model, train_model, TrainConfig};
use cmi_tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.1}s, limit {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
}

fn walk(layers: &[Layer]) -> usize {
    layers
        .iter()
        .map(|l| match l {
            Layer::Conv(_) => 1,
            Layer::Pool { .. } => 0,
            Layer::Branches(b) => b.iter().map(|x| walk(x)).sum(),
        })
        .sum()
}

fn block_arithmetic() -> Outcome {
    let start = Instant::now();
    for ((k, m, n), want) in [((1, 2, 1), 58), ((2, 3, 2), 85), ((3, 4, 3), 112), ((4, 7, 3), 149)] {
        ensure(cb_count(k, m, n) == want, || format!("cb_count({k},{m},{n}) = {}", cb_count(k, m, n)))?;
    }
    let triples = legal_compressed_triples();
    for &(k, m, n) in &triples {
        let plan = NetworkPlan::build(&ArchConfig::compressed(k, m, n)).map_err(|e| e.to_string())?;
        let walked: usize = plan.segments.iter().map(|s| walk(&s.layers)).sum();
        ensure(walked == cb_count(k, m, n), || format!("({k},{m},{n}): walk {walked}"))?;
    }
    let full = NetworkPlan::build(&ArchConfig::full()).map_err(|e| e.to_string())?;
    ensure(full.segments.iter().map(|s| walk(&s.layers)).sum::<usize>() == 149, || "full walk".into())?;
    within(start, Duration::from_secs(1))?;
    Ok(format!("58/85/112/149 exact; walk agrees on {} triples", triples.len()))
}

fn constraint_gate() -> Outcome {
    let start = Instant::now();
    let mut accepted = 0;
    let mut rejected = vec![];
    for k in 1..=4 {
        for m in 1..=7 {
            for n in 1..=3 {
                if validate_config(&ArchConfig::compressed(k, m, n)).is_empty() {
                    accepted += 1;
                } else {
                    rejected.push((k, m, n));
                }
            }
        }
    }
    ensure(accepted == 83 && rejected == [(4, 7, 3)], || format!("{accepted} accepted, rejected {rejected:?}"))?;
    within(start, Duration::from_secs(1))?;
    Ok("83 accepted, (4,7,3) rejected".into())
}

fn relu_equivalence() -> Outcome {
    let c = cmi_preset(1).unwrap().with_width(0.125).with_resolution(64, 64);
    let net = Network::<f32>::build(&c, relu_assignment(&c), 21).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let run = |images: &Tensor<f32>, labels: &[usize], fixed: bool| {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let phase = Phase::Train { dropout_seed: 9 };
        let fwd = if fixed { net.forward_fixed_relu(&mut g, x, phase) } else { net.forward(&mut g, x, phase) }.unwrap();
        let loss = g.softmax_cross_entropy(fwd.logits, labels).unwrap();
        g.backward(loss).unwrap();
        let mut bits: Vec<u32> = g.value(fwd.logits).data().iter().map(|v| v.to_bits()).collect();
        for &p in &fwd.params {
            bits.extend(g.grad(p).unwrap().iter().map(|v| v.to_bits()));
        }
        bits
    };
    for b in 0..10 {
        let images = Tensor::uniform([2, 3, 64, 64], -1.0, 1.0, &mut rng);
        let labels = [rng.gen_range(0..4), rng.gen_range(0..4)];
        ensure(run(&images, &labels, false) == run(&images, &labels, true), || format!("batch {b} differs"))?;
    }
    Ok("10 batches bit-identical (outputs and gradients)".into())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let suites = op_suites(10, 4).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for s in &suites {
        ensure(s.passed(), || format!("{} max rel. error {:.3e}", s.name, s.max_rel_error))?;
        worst = worst.max(s.max_rel_error);
    }
    let c = cmi_preset(1).unwrap().with_width(0.125).with_resolution(64, 64);
    let check = network_check(&c, 3, true, 5).map_err(|e| e.to_string())?;
    ensure(check.result.passed(), || format!("network max rel. error {:.3e}", check.result.max_rel_error))?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "{} op suites max {worst:.1e}; network blocks {:?} max {:.1e} over {} entries ({} rechecked past a kink)",
        suites.len(),
        check.blocks,
        check.result.max_rel_error,
        check.result.checked,
        check.refined
    ))
}

/// Confusion matrix by explicit counting, then per-class F1.
fn brute_macro_f1(t: &[usize], p: &[usize], k: usize) -> f64 {
    let mut cm = vec![vec![0usize; k]; k];
    for i in 0..t.len() {
        cm[t[i]][p[i]] += 1;
    }
    let mut total = 0.0;
    for c in 0..k {
        let tp = cm[c][c] as f64;
        let row: usize = cm[c].iter().sum();
        let col: usize = (0..k).map(|r| cm[r][c]).sum();
        if tp > 0.0 {
            let precision = tp / col as f64;
            let recall = tp / row as f64;
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / k as f64
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.gen_range(2..=6);
        let n = rng.gen_range(1..=50);
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let got = macro_f1(&t, &p, k).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_macro_f1(&t, &p, k)).abs());
    }
    ensure(worst < 1e-12, || format!("max deviation {worst:e}"))?;
    let hand = macro_f1(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap();
    ensure((hand - 11.0 / 15.0).abs() < 1e-15, || format!("hand case {hand}"))?;
    Ok(format!("200 instances agree (max dev {worst:.0e}); hand case 11/15"))
}

fn stratification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cases: Vec<(Vec<usize>, usize)> = vec![(vec![111, 149, 108, 68], 3)];
    while cases.len() < 500 {
        let classes = rng.gen_range(1..=6);
        let counts: Vec<usize> = (0..classes).map(|_| rng.gen_range(1..60)).collect();
        let k = rng.gen_range(2..=5);
        if counts.iter().sum::<usize>() >= k {
            cases.push((counts, k));
        }
    }
    for (case, (counts, k)) in cases.iter().enumerate() {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
        let plan = stratified_folds(&labels, *k, case as u64).map_err(|e| e.to_string())?;
        let mut seen = vec![0usize; labels.len()];
        for f in 0..*k {
            for i in plan.fold(f) {
                seen[i] += 1;
            }
            for (c, &n) in counts.iter().enumerate() {
                let got = plan.fold(f).iter().filter(|&&i| labels[i] == c).count() as f64;
                let ideal = n as f64 / *k as f64;
                ensure((got - ideal).abs() <= 1.0, || format!("case {case} class {c} fold {f}: {got} vs {ideal:.2}"))?;
            }
        }
        ensure(seen.iter().all(|&s| s == 1), || format!("case {case} is not a partition"))?;
    }
    let sizes = stratified_folds(&cases[0].0.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect::<Vec<_>>(), 3, 0)
        .unwrap()
        .fold_sizes();
    Ok(format!("500 multisets within ±1 and partitioned; 436 samples -> {sizes:?}"))
}

fn desk_learning() -> Outcome {
    let start = Instant::now();
    let data = generate_synthetic(&SynthSpec {
        seed: 7,
        ..SynthSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let folds = stratified_folds(&data.labels(), 3, 7).map_err(|e| e.to_string())?;
    let c = cmi_preset(1).unwrap().with_width(0.125).with_resolution(64, 64);
    let a = sample_one(c.cb_count(), &ActivationKind::STANDARD_SET, 7).map_err(|e| e.to_string())?;
    let mut net = Network::<f32>::build(&c, a, 7).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let out = train_model(&mut net, &data, &folds.complement(0), &cfg).map_err(|e| e.to_string())?;
    let eval = evaluate_model(&net, &data, &folds.fold(0), cfg.batch_size, F1Average::Macro).map_err(|e| e.to_string())?;
    let (first, last) = (out.loss_curve[0], *out.loss_curve.last().unwrap());
    ensure(eval.f1 >= 0.9, || format!("validation macro-F1 {:.3}", eval.f1))?;
    ensure(last < first, || format!("loss {first:.3} -> {last:.3}"))?;
    within(start, Duration::from_secs(1200))?;
    Ok(format!(
        "validation macro-F1 {:.3} after {} epochs; loss {first:.3} -> {last:.4}; {:.1}s",
        eval.f1,
        cfg.epochs,
        start.elapsed().as_secs_f64()
    ))
}

fn cost_ordering() -> Outcome {
    let archs = [cmi_preset(1).unwrap(), cmi_preset(2).unwrap(), cmi_preset(3).unwrap(), ArchConfig::full()];
    for width in [1.0, 0.5, 0.25, 0.125] {
        let stats: Vec<_> = archs.iter().map(|a| arch_stats(&NetworkPlan::build(&a.clone().with_width(width)).unwrap())).collect();
        for w in stats.windows(2) {
            ensure(w[0].flops_per_image < w[1].flops_per_image, || format!("flops order at width {width}"))?;
            ensure(w[0].parameter_count < w[1].parameter_count, || format!("params order at width {width}"))?;
        }
    }

    let data = generate_synthetic(&SynthSpec {
        per_class: 12,
        seed: 8,
        ..SynthSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let idx: Vec<usize> = (0..data.len()).collect();
    let cfg = TrainConfig {
        epochs: 5,
        seed: 8,
        ..TrainConfig::default()
    };
    let mut times = vec![];
    let mut sizes = vec![];
    for arch in &archs {
        let c = arch.clone().with_width(0.125).with_resolution(64, 64);
        let mut total = 0.0;
        for rep in 0..3u64 {
            let a = sample_one(c.cb_count(), &ActivationKind::STANDARD_SET, rep).unwrap();
            let mut net = Network::<f32>::build(&c, a, rep).map_err(|e| e.to_string())?;
            total += train_model(&mut net, &data, &idx, &cfg).map_err(|e| e.to_string())?.t_train_seconds;
            if rep == 0 {
                let bytes = serialize_model(&net).len();
                let stats = arch_stats(net.plan());
                ensure(bytes == stats.parameter_count * 4 + header_bytes(c.cb_count()), || format!("{} size {bytes}", c.id()))?;
                ensure(bytes == stats.serialized_bytes, || "serialized_bytes disagrees".into())?;
                sizes.push(bytes);
            }
        }
        times.push(total / 3.0);
    }
    ensure(times.windows(2).all(|w| w[0] < w[1]), || format!("mean T_train {times:.2?}"))?;
    ensure(sizes.windows(2).all(|w| w[0] < w[1]), || format!("sizes {sizes:?}"))?;
    let mb: Vec<String> = archs
        .iter()
        .map(|a| format!("{:.0}", arch_stats(&NetworkPlan::build(a).unwrap()).serialized_bytes as f64 / 1e6))
        .collect();
    Ok(format!("mean T_train {times:.2?}s; width-1 checkpoints {} MB", mb.join("/")))
}

fn sampler_statistics() -> Outcome {
    let set = ActivationKind::STANDARD_SET;
    let a = sample_one(10_000, &set, 10).map_err(|e| e.to_string())?;
    let freqs: Vec<f64> = a.histogram(&set).iter().map(|&c| c as f64 / 10_000.0).collect();
    ensure(freqs.iter().all(|f| (0.23..=0.27).contains(f)), || format!("frequencies {freqs:?}"))?;
    let arch = cmi_preset(1).unwrap();
    let plan = SamplePlan::new(arch.clone(), 3, 10);
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let p1 = write_assignments(d1.path(), &arch, &sample_assignments(&plan).unwrap()).map_err(|e| e.to_string())?;
    let p2 = write_assignments(d2.path(), &arch, &sample_assignments(&plan).unwrap()).map_err(|e| e.to_string())?;
    for (x, y) in p1.iter().zip(&p2) {
        ensure(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), || format!("{} differs", x.display()))?;
    }
    Ok(format!("frequencies {freqs:.4?}; {} files byte-identical", p1.len()))
}

fn protocol_determinism() -> Outcome {
    let sweep = |dir: &std::path::Path| -> Result<Vec<cmi::train::cv::RunReport>, String> {
        let text = format!(
            r#"{{"architectures": ["cmi1", "cmi2"], "num_models": 2, "width_multiplier": 0.125,
                "resolution": [32, 32], "train": {{"epochs": 2, "batch_size": 8, "seed": 3}},
                "dataset": {{"kind": "synthetic", "per_class": 4, "seed": 3}},
                "fold_seed": 3, "sample_seed": 3, "init_seed": 3, "output_dir": "{}"}}"#,
            dir.display()
        );
        let cfg = SweepConfig::from_json(&text).map_err(|e| e.to_string())?;
        run_sweep(&cfg).map_err(|e| e.to_string())?;
        read_reports(dir).map_err(|e| e.to_string())
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (r1, r2) = (sweep(d1.path())?, sweep(d2.path())?);
    ensure(r1.len() == 8, || format!("{} reports", r1.len()))?;
    let strip = |rs: &[cmi::train::cv::RunReport]| rs.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
    ensure(strip(&r1) == strip(&r2), || "non-timing fields differ between runs".into())?;
    let (md, best, _) = render_tables(&r1).map_err(|e| e.to_string())?;
    let header: Vec<&str> = best.lines().next().unwrap().split(',').skip(1).collect();
    ensure(header == CANONICAL_COLUMNS, || format!("columns {header:?}"))?;
    ensure(best.lines().count() == 5, || "expected 4 metric rows".into())?;
    ensure(md.contains("| F1_valid |"), || "markdown table missing".into())?;
    Ok("8 reports identical modulo timing; best table has 8 columns x 4 rows".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("block arithmetic", block_arithmetic),
        ("constraint gate", constraint_gate),
        ("uniform-RELU equivalence", relu_equivalence),
        ("gradient correctness", gradient_correctness),
        ("metric oracle", metric_oracle),
        ("stratification", stratification),
        ("desk-scale learning", desk_learning),
        ("cost ordering", cost_ordering),
        ("sampler statistics", sampler_statistics),
        ("protocol determinism", protocol_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
