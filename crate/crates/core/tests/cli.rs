use std::path::Path;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = cmi::cli::run(std::iter::once("cmi").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn sweep_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let text = format!(
        r#"{{
  "architectures": ["cmi1", {{"k": 1, "m": 1, "n": 1}}],
  "num_models": 1,
  "width_multiplier": 0.125,
  "resolution": [32, 32],
  "train": {{"epochs": {epochs}, "batch_size": 8}},
  "dataset": {{"kind": "synthetic", "per_class": 3, "seed": 2}},
  "output_dir": "{}"
}}"#,
        dir.join("runs").display()
    );
    let path = dir.join("sweep.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn count_prints_block_totals() {
    let (code, out, _) = run(&["count", "--preset", "cmi1"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["cb_count"], 58);
    let (code, out, _) = run(&["count", "--k", "4", "--m", "7", "--n", "3", "--mode", "full"]);
    assert_eq!(code, 0);
    assert!(out.contains("149"));
}

#[test]
fn count_reports_violations_with_exit_two() {
    let (code, _, err) = run(&["count", "--k", "4", "--m", "7", "--n", "3"]);
    assert_eq!(code, 2);
    assert!(err.contains("k+m+n must be < 14 (got 14)"), "{err}");
    let (code, _, err) = run(&["count", "--k", "5", "--m", "1", "--n", "1"]);
    assert_eq!(code, 2);
    assert!(err.contains("got 5"), "{err}");
    let (code, _, err) = run(&["count", "--preset", "cmi1", "--resolution", "16x16"]);
    assert_eq!(code, 2);
    assert!(err.contains("32"), "{err}");
}

#[test]
fn sample_writes_one_file_per_model() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("a");
    let (code, out, _) = run(&["sample", "--preset", "cmi2", "--num", "4", "--seed", "3", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 4);
    assert_eq!(std::fs::read_dir(&out_dir).unwrap().count(), 4);
    let (code, _, err) = run(&["sample", "--preset", "cmi2", "--set", "RELU,RELU", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
}

#[test]
fn synth_writes_a_loadable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["synth", "--per-class", "2", "--resolution", "32x32", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0);
    let manifest = Path::new(out.trim());
    let ds = cmi::data::load_manifest(manifest, &cmi::data::ManifestOptions::new((32, 32))).unwrap();
    assert_eq!(ds.len(), 8);
}

#[test]
fn train_resumes_and_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    let config = sweep_config(dir.path(), 1);
    let (code, out, err) = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("4 runs written, 0 already present"), "{out}");
    let (code, out, _) = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("0 runs written, 4 already present"), "{out}");
    let runs = dir.path().join("runs");
    let (code, out, _) = run(&["report", "--dir", runs.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("CMI_1") && out.contains("CI_1") && out.contains("CMI(1,1,1)"), "{out}");
    for f in ["tables.md", "best.csv", "mean.csv"] {
        assert!(runs.join(f).is_file());
    }
}

#[test]
fn train_rejects_zero_epochs_and_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = sweep_config(dir.path(), 0);
    let (code, _, err) = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("epochs"), "{err}");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"architectures": ["cmi1"], "num_models": 1, "resolution": [32, 32], "dataset": {"kind": "synthetic"}, "output_dir": "x", "epochz": 3}"#).unwrap();
    let (code, _, err) = run(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("epochz"), "{err}");
}

#[test]
fn gradcheck_ops_only() {
    let (code, out, _) = run(&["gradcheck", "--cases", "2", "--blocks", "0"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.lines().all(|l| l.ends_with("ok")), "{out}");
}

#[test]
fn report_on_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&["report", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("no reports"));
}
