//! End-to-end runs of the binary: reports, exit codes and determinism.

use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfinduced")).args(args).output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON report")
}

fn checks_pass(r: &Value) -> bool {
    r["checks"].as_array().unwrap().iter().all(|c| c["status"] == "pass")
}

#[test]
fn two_odometer_is_self_induced() {
    let out = run(&["odo", "self-induced", "--cycle", "2", "--verify"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["output"]["verdict"], "YES");
    assert_eq!(r["output"]["witness_prime"], 2);
    assert_eq!(r["exit_status"], 0);
    assert!(checks_pass(&r));
}

#[test]
fn all_primes_odometer_is_not() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("allp.json");
    std::fs::write(&path, r#"{"form": "valuations", "valuations": {}, "infinite_support": true}"#).unwrap();
    let out = run(&["odo", "self-induced", "--file", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["output"]["verdict"], "NO");
}

#[test]
fn derive_from_a_substitution_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pd.json");
    std::fs::write(&path, r#"{"alphabet": ["0", "1"], "rules": {"0": "01", "1": "00"}}"#).unwrap();
    let out = run(&["sub", "derive", "--file", path.to_str().unwrap(), "--letter", "0", "--verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!(checks_pass(&r));
    let text = r["output"].to_string();
    assert!(text.contains("ABB"), "{text}");
}

#[test]
fn maximal_vershik_path_needs_extension() {
    let out = run(&["bv", "vershik", "--builtin", "base2", "--prefix", "1,1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(report(&out)["exit_status"], 1);
}

#[test]
fn bad_input_is_a_usage_error() {
    let out = run(&["sub", "analyze", "--file", "/nonexistent/input.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
    assert_eq!(run(&["bv", "validate"]).status.code(), Some(2));
}

#[test]
fn reports_are_deterministic() {
    for args in [
        &["gensub", "fixedpoint", "--xi", "8", "--seed", "0.1", "--radius", "8", "--verify"][..],
        &["product", "witness", "--verify"][..],
        &["bv", "kac", "--builtin", "pd", "--paths", "1", "--verify"][..],
    ] {
        let (a, b) = (run(args), run(args));
        assert_eq!(a.stdout, b.stdout);
        assert_eq!(a.status.code(), Some(0));
    }
}

#[test]
fn xi_window_through_the_cli() {
    let out = run(&["gensub", "fixedpoint", "--xi", "8", "--seed", "0.1", "--radius", "8"]);
    assert_eq!(report(&out)["output"]["window"], "0102010∞.01020103");
}

#[test]
fn digest_depends_on_inputs() {
    let a = report(&run(&["odo", "canon", "--cycle", "6,4"]));
    let b = report(&run(&["odo", "canon", "--cycle", "6,5"]));
    assert_ne!(a["inputs_digest"], b["inputs_digest"]);
    assert_eq!(a["inputs_digest"].as_str().unwrap().len(), 64);
}
