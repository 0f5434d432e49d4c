use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUICK: &[&str] = &["--pretrain-iterations", "1000", "--finetune-iterations", "1000"];

fn failsift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_failsift")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = failsift(args);
    assert!(
        out.status.success(),
        "failsift {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, noise: &str) -> String {
    let data = dir.join("data");
    ok(&["synth", "--noise", noise, "--per-mode", "30", "--out", data.to_str().unwrap()]);
    data.to_str().unwrap().to_string()
}

#[test]
fn help_exits_zero() {
    let out = ok(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["ingest", "synth", "anomaly", "cluster", "eval", "run", "bench"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn usage_error_is_nonzero() {
    assert!(!failsift(&["run"]).status.success());
    assert!(!failsift(&["run", "x", "--rep", "bogus"]).status.success());
}

#[test]
fn missing_dataset_reports_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.jsonl");
    let out = failsift(&["run", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `load` failed"));
}

#[test]
fn synthetic_end_to_end_is_pure_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "0");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let mut args = vec!["run", &data, "--seed", "3", "--out", out.to_str().unwrap()];
        args.extend_from_slice(QUICK);
        ok(&args);
    }
    let summary = json(&a.join("summary.json"));
    assert_eq!(summary["schema_version"], 1);
    assert!(summary["overall_purity"].as_f64().unwrap() >= 0.99);

    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in names.iter().filter(|n| *n != "timing.json") {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?} differs");
    }
    for f in ["labels.json", "purity.json", "distribution.json", "distribution.svg", "dec_history.csv"] {
        assert!(a.join(f).exists(), "{f} missing");
    }

    let timing = json(&a.join("timing.json"));
    let sum = timing["stage_sum_seconds"].as_f64().unwrap();
    assert!(sum <= timing["total_seconds"].as_f64().unwrap());
    let listed: f64 = timing["stages"].as_array().unwrap().iter().map(|s| s["seconds"].as_f64().unwrap()).sum();
    assert!((listed - sum).abs() < 1e-9);
}

#[test]
fn cluster_then_eval_matches_kmedoids_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "0.05");
    let c = tmp.path().join("c");
    let r = tmp.path().join("r");
    let e = tmp.path().join("e");
    ok(&["cluster", &data, "--cluster", "kmedoids", "--rep", "anomaly", "--out", c.to_str().unwrap()]);
    ok(&["run", &data, "--cluster", "kmedoids", "--rep", "anomaly", "--out", r.to_str().unwrap()]);
    assert_eq!(fs::read(c.join("labels.json")).unwrap(), fs::read(r.join("labels.json")).unwrap());
    ok(&[
        "eval",
        &data,
        "--labels",
        c.join("labels.json").to_str().unwrap(),
        "--out",
        e.to_str().unwrap(),
    ]);
    assert_eq!(fs::read(e.join("purity.json")).unwrap(), fs::read(r.join("purity.json")).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "0");
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "cluster = \"kmedoids\"\nrestarts = 3\nseed = 5\n").unwrap();
    let out = tmp.path().join("o");
    ok(&[
        "cluster",
        &data,
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    let echoed = json(&out.join("config.json"));
    assert_eq!(echoed["clusterer"], "kmedoids");
    assert_eq!(echoed["restarts"], 3);
    assert_eq!(echoed["seed"], 7);
}

#[test]
fn anomaly_and_ingest_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "0");
    let out = tmp.path().join("an");
    ok(&["anomaly", &data, "--out", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("anomaly_matrix.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("spur:"));
    let copy = tmp.path().join("copy.jsonl");
    let ingest = ok(&["ingest", &data, "--out", copy.to_str().unwrap()]);
    let summary: Value = serde_json::from_slice(&ingest.stdout[..ingest.stdout.iter().rposition(|&b| b == b'}').unwrap() + 1]).unwrap();
    assert_eq!(summary["fault_injected"], 120);
    assert_eq!(summary["fault_free"], 20);
    assert!(copy.exists());
}

#[test]
fn bench_reports_overhead() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synth(tmp.path(), "0");
    let out = tmp.path().join("b");
    let mut args = vec!["bench", &data, "--out", out.to_str().unwrap()];
    args.extend_from_slice(QUICK);
    ok(&args);
    let t = json(&out.join("timing.json"));
    let overhead = t["overhead_seconds"].as_f64().unwrap();
    let diff = t["dec_seconds"].as_f64().unwrap() - t["kmedoids_seconds"].as_f64().unwrap();
    assert!((overhead - diff).abs() < 1e-12);
    assert!(t["timing"]["stages"].as_array().unwrap().len() >= 4);
}
