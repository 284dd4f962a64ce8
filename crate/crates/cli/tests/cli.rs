use std::process::{Command, Output};

fn cayley(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cayley")).args(args).output().expect("binary runs")
}

#[test]
fn identities_pass_and_are_reproducible() {
    let a = cayley(&["identities", "--seed", "9", "--trials", "500"]);
    let b = cayley(&["identities", "--seed", "9", "--trials", "500"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("criterion,case,metric,value,bound,pass\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn impossible_tolerance_fails_with_nonzero_exit() {
    let out = cayley(&["identities", "--trials", "200", "--tol", "1e-20"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains(",false"));
}

#[test]
fn moduli_reports_k_dimensional_kernel() {
    let out = cayley(&["moduli", "--k", "2", "--grid", "5", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let dim = rows
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["metric"] == "kernel_dim")
        .expect("kernel_dim row");
    assert_eq!(dim["value"].as_f64(), Some(2.0));
    assert_eq!(dim["case"], "k=2 n=5");
}

#[test]
fn newton_is_rejected_for_non_generic_scaffolds() {
    let out = cayley(&["newton", "--k", "1", "--grid", "4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("non-generic"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 3, "trials": 50, "tolerances": {"algebra": 1e-20}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(cayley(&["identities", "--config", cfg]).status.code(), Some(1));
    let out_path = dir.path().join("t.csv");
    let out = cayley(&["identities", "--config", cfg, "--tol", "1e-10", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(out_path).unwrap();
    assert!(text.contains("samples=50"));
}

#[test]
fn invalid_input_is_an_error() {
    assert_eq!(cayley(&["moduli", "--grid", "3"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"sed": 3}"#).unwrap();
    assert_eq!(cayley(&["symbols", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert!(!cayley(&["nonsense"]).status.success());
}
