use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fbsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbsde")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn bench_riskmin_row_passes() {
    let out = fbsde(&["bench", "--problem", "riskmin", "--T", "1", "--b", "0.2", "--sigma", "0.4"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    let row = table.lines().find(|l| l.starts_with("riskmin")).expect("riskmin row");
    assert!(row.contains("1.1250000000") && row.trim_end().ends_with("PASS"), "{table}");
}

#[test]
fn entropy_of_trivial_density() {
    let out = fbsde(&["entropy", "--b", "0", "--sigma", "0.4", "--n-paths", "2000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["entropy"]["entropy_hat"], 0.0);
    assert_eq!(v["entropy"]["closed_form"], 0.0);
    assert_eq!(v["verdict"], "PASS");
}

#[test]
fn zero_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t0.json",
        r#"{"command": "solve", "spec": {"model": {"family": "riskmin", "b": 0.2, "sigma": 0.4, "x0": 1}, "horizon": 0}}"#,
    );
    let out = fbsde(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("horizon nonpositive"));
    assert_eq!(fbsde(&["solve", "--T", "0"]).status.code(), Some(1));
}

#[test]
fn malformed_and_unknown_keys_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"command\": \"solve\",\n  \"seeds\": 3\n}");
    let out = fbsde(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3") && err.contains("seeds"), "{err}");

    let cfg = write(dir.path(), "broken.json", "{\"command\": \"solve\",,}");
    let err = String::from_utf8_lossy(&fbsde(&["solve", "--config", &cfg]).stderr).to_string();
    assert!(err.contains("line 1 column"), "{err}");

    assert_eq!(fbsde(&["solve", "--problem", "nope"]).status.code(), Some(1));
}

#[test]
fn solve_writes_summary_and_field_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let cfg = write(
        dir.path(),
        "solve.json",
        r#"{"command": "solve", "problem": "merton-log", "grid": {"nx": 60, "nt": 40}}"#,
    );
    let out = fbsde(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["grid"]["nx"], 60);
    assert!(summary["config"]["spec"]["model"]["family"] == "merton");
    let csv = fs::read_to_string(out_dir.join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y,z,u_hat"));
    assert_eq!(lines.count(), 41 * 60);
}

#[test]
fn embedded_config_reproduces_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = fbsde(&["verify", "--problem", "riskmin", "--n-paths", "200", "--dt", "0.02", "--seed", "7", "--format", "json"]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let v = stdout_json(&first);
    let cfg = write(dir.path(), "embedded.json", &v["config"].to_string());
    let again = fbsde(&["verify", "--config", &cfg]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(first.stdout, again.stdout);
}

#[test]
fn simulate_emits_bundle_csv() {
    let out = fbsde(&["simulate", "--n-paths", "3", "--dt", "0.25", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("path,t,X,Y,Z"));
    assert_eq!(lines.count(), 3 * 5);
}

#[test]
fn solver_instability_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "blow.json",
        r#"{"command": "solve", "spec": {"model": {"family": "affine", "x0": 0, "g0": 1e12, "g_y": 1e9, "domain": [-1, 1]},
            "grid": {"nx": 11, "nt": 2}, "horizon": 1}}"#,
    );
    let out = fbsde(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
