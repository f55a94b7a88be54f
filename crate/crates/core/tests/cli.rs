use std::path::Path;
use std::process::{Command, Output};

fn pcsat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcsat"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_fit_apply_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pcsat(d, &["synth", "--out", "calls.csv", "--groups", "3", "--calls-per-day", "8", "--response-rate", "0.3", "--seed", "4"]));
    ok(pcsat(d, &["fit", "--input", "calls.csv", "--iterations", "500", "--seed", "42", "--out", "th.json"]));
    let th = json(&d.join("th.json"));
    assert_eq!(th["schema"], 1);
    assert_eq!(th["seed"], 42);
    let t: Vec<f64> = ["t12", "t23", "t34", "t45"].iter().map(|k| th[k].as_f64().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[0] > w[1]));
    assert!(th["loss"]["total"].as_f64().unwrap() >= 0.0);
    let meta = json(&d.join("th.meta.json"));
    assert_eq!(meta["command"], "fit");
    assert_eq!(meta["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    ok(pcsat(d, &["apply", "--input", "calls.csv", "--thresholds", "th.json", "--out", "scored.csv"]));
    let input = std::fs::read_to_string(d.join("calls.csv")).unwrap();
    let scored = std::fs::read_to_string(d.join("scored.csv")).unwrap();
    assert_eq!(input.lines().count(), scored.lines().count());
    for (a, b) in input.lines().zip(scored.lines()).skip(1) {
        let (prefix, level) = b.rsplit_once(',').unwrap();
        assert_eq!(prefix, a);
        assert!(matches!(level, "1" | "2" | "3" | "4" | "5"));
    }
    assert!(d.join("scored.meta.json").exists());

    ok(pcsat(d, &["evaluate", "--input", "calls.csv", "--thresholds", "th.json", "--out", "eval.json"]));
    let eval = json(&d.join("eval.json"));
    let fitted = th["loss"]["total"].as_f64().unwrap();
    // Evaluating on the training data reproduces the training loss.
    assert!((eval["loss"]["total"].as_f64().unwrap() - fitted).abs() < 1e-12);
}

#[test]
fn fit_is_reproducible_and_per_group_modes_write_groups() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pcsat(d, &["synth", "--out", "calls.csv", "--groups", "4", "--calls-per-day", "6", "--response-rate", "0.5"]));
    ok(pcsat(d, &["fit", "--input", "calls.csv", "--iterations", "300", "--out", "a.json"]));
    ok(pcsat(d, &["fit", "--input", "calls.csv", "--iterations", "300", "--out", "b.json"]));
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());

    ok(pcsat(d, &["fit", "--input", "calls.csv", "--iterations", "300", "--mode", "per_group", "--out", "g.json"]));
    let g = json(&d.join("g.json"));
    assert_eq!(g["mode"], "per_group");
    assert_eq!(g["groups"].as_object().unwrap().len(), 4);
    assert_eq!(g["default"]["provenance"], "baseline");
    ok(pcsat(d, &["apply", "--input", "calls.csv", "--thresholds", "g.json", "--out", "s.csv"]));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pcsat(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(pcsat(dir.path(), &["fit", "--bogus"]).status.code(), Some(2));
}

#[test]
fn data_errors_exit_1_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = pcsat(d, &["fit", "--input", "missing.csv", "--out", "th.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "IoError");

    std::fs::write(d.join("bad.csv"), "call_id,date\nc,2024-01-01\n").unwrap();
    let out = pcsat(d, &["fit", "--input", "bad.csv", "--out", "th.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "SchemaError");
}

#[test]
fn simulate_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.cfg"), "seed = 2\niterations = 200\nbootstrap_resamples = 10\nsynth_tiers = 4x3,2x20\nsynth_response_rate = 0.3\n").unwrap();
    ok(pcsat(d, &["simulate", "--config", "run.cfg", "--out", "results"]));
    let cells = std::fs::read_to_string(d.join("results/cells.csv")).unwrap();
    assert!(cells.starts_with(
        "trial,group_id,condition,bin,n_train_responses,n_test_responses,delta_pct_satisfied,delta_mean_signed,delta_mean_abs,mse,loss_total\n"
    ));
    assert_eq!((cells.lines().count() - 1) % 5, 0);
    assert!(d.join("results/bins.csv").exists());
    assert!(d.join("results/skips.csv").exists());
    let meta = json(&d.join("results/metadata.json"));
    assert_eq!(meta["seed"], 2);
}
