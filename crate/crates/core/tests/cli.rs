use std::path::Path;
use std::process::{Command, Output};

fn cgpseg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgpseg"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CGPSEG_WORKERS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> serde_json::Value {
    let out = cgpseg(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null)
}

#[test]
fn train_predict_eval_export_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "train", "--count", "3", "--seed", "1", "--size", "64"], d);
    ok(&["synth", "--out", "test", "--count", "2", "--seed", "2", "--size", "64", "--test"], d);

    let summary = ok(
        &[
            "--json", "--workers", "1", "train", "--dataset", "train/manifest.json", "--test",
            "test/manifest.json", "--runs", "2", "--iterations", "20", "--seed", "5", "--out", "runs",
        ],
        d,
    );
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    assert_eq!(summary["runs"][1]["seed"], 6);
    for f in ["model_000.json", "model_001.json", "trace_000.csv", "summary.json", "summary.csv"] {
        assert!(d.join("runs").join(f).exists(), "{f} missing");
    }
    let trace = std::fs::read_to_string(d.join("runs/trace_000.csv")).unwrap();
    assert!(trace.starts_with("generation,error,active_nodes,replaced\n"));

    // same seed, same result
    let again = ok(
        &[
            "--json", "train", "--dataset", "train/manifest.json", "--test", "test/manifest.json", "--runs", "2",
            "--iterations", "20", "--seed", "5", "--out", "runs2",
        ],
        d,
    );
    assert_eq!(summary, again);
    let genotype = |dir: &str| {
        let text = std::fs::read_to_string(d.join(dir).join("model_000.json")).unwrap();
        serde_json::from_str::<serde_json::Value>(&text).unwrap()["genotype"].clone()
    };
    assert_eq!(genotype("runs"), genotype("runs2"));

    let eval = ok(
        &["--json", "eval", "--model", "runs/model_000.json", "--dataset", "test/manifest.json", "--csv", "eval.csv"],
        d,
    );
    assert_eq!(eval["scores"].as_array().unwrap().len(), 2);
    assert_eq!(eval["metric"], "AP50");
    let test_error = summary["runs"][0]["test_error"].as_f64().unwrap();
    assert!((eval["error"].as_f64().unwrap() - test_error).abs() < 1e-12);
    assert_eq!(std::fs::read_to_string(d.join("eval.csv")).unwrap().lines().count(), 3);

    let pred = ok(
        &["--json", "predict", "--model", "runs/model_000.json", "--input", "test/disc_000.png", "--out", "p.png"],
        d,
    );
    assert!(pred["instances"].is_u64());
    assert!(d.join("p.png").exists());
    ok(&["predict", "--model", "runs/model_000.json", "--dataset", "test/manifest.json", "--out", "preds"], d);
    assert!(d.join("preds/pred_0001.png").exists());

    ok(&["export", "--model", "runs/model_000.json", "--out", "a.txt", "--python", "a.py"], d);
    ok(&["export", "--model", "runs/model_000.json", "--out", "b.txt"], d);
    let a = std::fs::read(d.join("a.txt")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.txt")).unwrap());
    assert!(String::from_utf8(a).unwrap().starts_with("cgpseg-pipeline 1\n"));
    assert!(std::fs::read_to_string(d.join("a.py")).unwrap().contains("def run("));

    let ens = ok(
        &[
            "--json", "ensemble", "--models", "runs", "--input", "test/disc_000.png", "--out", "h.png", "--sweep",
            "test/manifest.json", "--curve", "curve.csv", "--upscale", "test/disc_001.png", "--upscale-out", "u.png",
        ],
        d,
    );
    assert_eq!(ens["models"], 2);
    let t = ens["best_threshold"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&t));
    assert_eq!(std::fs::read_to_string(d.join("curve.csv")).unwrap().lines().count(), 102);
    assert!(d.join("h.png").exists() && d.join("u.png").exists());

    let pairs = ok(
        &["--json", "analyze", "pair", "--a", "test/disc_000_labels.png", "--b", "test/disc_000_labels.png"],
        d,
    );
    assert!(pairs["a_only"].as_array().unwrap().is_empty());
    ok(
        &["analyze", "features", "--labels", "test/disc_000_labels.png", "--channels", "test/disc_000.png", "--out", "f.csv"],
        d,
    );
    let features = std::fs::read_to_string(d.join("f.csv")).unwrap();
    assert!(features.starts_with("label,area,pattern_0,pattern_1,c0_positive,c0_sum,c0_mean\n"));
    ok(&["analyze", "filter", "--labels", "test/disc_000_labels.png", "--min", "10", "--max", "10000", "--out", "kept.png"], d);

    let bench = ok(&["--json", "bench", "--model", "runs/model_000.json", "--width", "64", "--height", "64", "--iterations", "3"], d);
    assert!(bench["images_per_second"].as_f64().unwrap() > 0.0);
}

#[test]
fn structured_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = cgpseg(&["--json", "eval", "--model", "missing.json", "--dataset", "x.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["error"].as_str().unwrap().contains("missing.json"));

    std::fs::write(dir.path().join("bad.json"), "{\"evolution\": {\"lambda\": 0}}").unwrap();
    let out = cgpseg(&["train", "--config", "bad.json", "--dataset", "x", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}

#[test]
fn library_manifest_is_json() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(&["library"], dir.path());
    assert_eq!(v["functions"].as_array().unwrap().len(), 42);
}
