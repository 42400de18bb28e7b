use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn transinfo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transinfo")).args(args).output().expect("binary runs")
}

fn run_spec(dir: &Path, spec: &Value, extra: &[&str]) -> Output {
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    let out = dir.join("out");
    let mut args = vec!["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    transinfo(&args)
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(format!("{name}.json"))).unwrap()).unwrap()
}

fn number(v: &Value) -> f64 {
    v.as_str().expect("floats are printed as strings").parse().unwrap()
}

#[test]
fn list_examples_is_complete_and_stable() {
    let a = transinfo(&["list-examples"]);
    assert!(a.status.success());
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    for name in ["bernoulli", "jump2", "ou", "quartic", "mminf", "beta-potential", "gauss-shift", "product-3x3"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert_eq!(a.stdout, transinfo(&["list-examples"]).stdout);
}

#[test]
fn bernoulli_poincare_constant() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "kind": "best-constant", "name": "bern",
        "model": {"example": "bernoulli", "p": 0.3},
        "params": {"metric": "trivial", "expect_c_p": 0.21}
    });
    let out = run_spec(dir.path(), &spec, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "bern");
    assert!((number(&r["values"]["c_P"]) - 0.21).abs() < 1e-12);
    assert_eq!(r["values"]["w2i_diverged"], Value::Bool(true));
    // 17 significant digits
    assert_eq!(r["values"]["c_P"].as_str().unwrap().split('e').next().unwrap().len(), 18);
}

#[test]
fn chain_file_relative_to_spec() {
    let dir = tempfile::tempdir().unwrap();
    let chain = serde_json::json!({"states": ["a", "b", "c"], "rates": [[0, 1, 0], [1, 0, 2], [0, 2, 0]]});
    fs::write(dir.path().join("chain.json"), chain.to_string()).unwrap();
    let spec = serde_json::json!({
        "kind": "verify-tci", "name": "file", "model": {"file": "chain.json"},
        "params": {"metric": "line", "n_densities": 200}
    });
    let out = run_spec(dir.path(), &spec, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_rates_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ragged = serde_json::json!({"kind": "best-constant", "model": {"rates": [[0, 1], [1]]}});
    let out = run_spec(dir.path(), &ragged, &[]);
    assert_eq!(out.status.code(), Some(3));
    let not_reversible = serde_json::json!({
        "kind": "best-constant",
        "model": {"rates": [[0, 1, 0], [0, 0, 1], [1, 0, 0]], "mu": [0.2, 0.3, 0.5]}
    });
    let out = run_spec(dir.path(), &not_reversible, &[]);
    assert_eq!(out.status.code(), Some(3));
    let garbage = serde_json::json!({"kind": "best-constant", "model": {"rates": "yes"}});
    let out = run_spec(dir.path(), &garbage, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parameters_are_validated_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let typo = serde_json::json!({"kind": "ckp-scan", "params": {"n_sample": 10}});
    assert_eq!(run_spec(dir.path(), &typo, &[]).status.code(), Some(2));
    let missing = serde_json::json!({"kind": "simulate", "model": {"example": "bernoulli"}, "params": {"t": 1.0}});
    assert_eq!(run_spec(dir.path(), &missing, &[]).status.code(), Some(2));
    let no_model = serde_json::json!({"kind": "lyapunov"});
    assert_eq!(run_spec(dir.path(), &no_model, &[]).status.code(), Some(2));
    let unknown = serde_json::json!({"kind": "diffusion", "model": {"example": "brownian"}});
    assert_eq!(run_spec(dir.path(), &unknown, &[]).status.code(), Some(3));
}

#[test]
fn failed_check_sets_exit_status_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "kind": "best-constant", "name": "wrong",
        "model": {"example": "bernoulli", "p": 0.3}, "params": {"expect_c_p": 0.25, "w2": false}
    });
    let out = run_spec(dir.path(), &spec, &[]);
    assert_eq!(out.status.code(), Some(1));
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "fail");
    assert_eq!(summary["failed"][0]["experiment"], "wrong");
    let stderr: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(stderr, summary);
}

#[test]
fn every_bundled_model_loads() {
    let dir = tempfile::tempdir().unwrap();
    let mut members = Vec::new();
    for name in ["bernoulli", "jump2", "mminf", "product-3x3"] {
        members.push(serde_json::json!({"kind": "best-constant", "name": name, "model": {"example": name}, "params": {"w2": false}}));
    }
    for name in ["ou", "quartic", "gauss-shift", "beta-potential"] {
        members.push(serde_json::json!({"kind": "diffusion", "name": name, "model": {"example": name, "n": 200}}));
    }
    let spec = serde_json::json!({"kind": "paper-suite", "experiments": members});
    let out = run_spec(dir.path(), &spec, &[]);
    assert!(out.status.success(), "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
}

#[test]
fn paper_suite_passes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({"kind": "paper-suite", "seed": 5});
    let first = run_spec(dir.path(), &spec, &[]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let snapshot = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut files: Vec<_> = fs::read_dir(d.join("out"))
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = snapshot(dir.path());
    assert!(a.iter().any(|(n, _)| n == "ledger.csv"));
    let second = run_spec(dir.path(), &spec, &["--jobs", "1"]);
    assert!(second.status.success());
    assert_eq!(a, snapshot(dir.path()));
    let ledger = String::from_utf8(a.iter().find(|(n, _)| n == "ledger.csv").unwrap().1.clone()).unwrap();
    assert!(ledger.starts_with("model,u,t,r,n_paths,p_hat,ci_low,ci_high,bound,verdict,seed"));
    assert!(!ledger.contains("bound_violated"));
}

#[test]
fn seed_override_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({
        "kind": "simulate", "name": "sim", "model": {"example": "jump2", "p": 0.25}, "seed": 1,
        "params": {"observable": {"kind": "state", "values": [0, 1]}, "t": 5.0, "n_paths": 2000,
                   "radii": [0.1], "bound": {"kind": "hoeffding"}, "dump_samples": true}
    });
    assert!(run_spec(dir.path(), &spec, &[]).status.success());
    let a = fs::read(dir.path().join("out/sim_samples.csv")).unwrap();
    assert!(run_spec(dir.path(), &spec, &["--seed", "2"]).status.success());
    let b = fs::read(dir.path().join("out/sim_samples.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(report(dir.path(), "sim")["seed"], 2);
}
