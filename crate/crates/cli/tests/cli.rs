use std::path::Path;
use std::process::{Command, Output};

fn nskq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nskq")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "lattice": {"dim": 2, "modes": 16, "period": 6.283185307179586},
    "solver": {"horizon": 0.05, "grid": {"nodes": 8, "ratio": 0.7}, "quad_nodes": 4},
    "data": {"generator": "exp_tail", "sigma0": 0.5, "a": 0.1, "u": 0.1}
}"#;

#[test]
fn passing_check_exits_zero() {
    let o = nskq(&["verify", "beta"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("PASS beta:"), "{}", stdout(&o));
}

#[test]
fn unknown_check_is_a_usage_error() {
    let o = nskq(&["verify", "lemma"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lemma-conv"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"data": {"generator": "white_noise"}}"#);
    let o = nskq(&["--config", &cfg, "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("white_noise"));
    let o = nskq(&["--config", "/nonexistent/cfg.json", "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = nskq(&["--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap(), "simulate"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["run.json", "norms.csv", "radius.csv", "snapshots/final.snap"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 4);
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let json = SMALL.replacen('{', r#"{"radius": {"sigma0": 5.0, "times": [0.025, 0.05]},"#, 1);
    let cfg = write_config(dir.path(), &json);
    let o = nskq(&["--config", &cfg, "verify", "radius-growth"]);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("FAIL radius-growth:"));
}
