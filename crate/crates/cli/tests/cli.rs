use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landscape-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_json_is_a_usage_error_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\n  \"n_runs\": \n}");
    let o = lab(&["check-grad", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn bad_field_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"generator": {"family": "pca", "d": "ten"}}"#);
    let o = lab(&["check-grad", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("generator.d"), "{}", stderr(&o));
}

#[test]
fn mismatched_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"experiment": "optimize", "generator": {"family": "pca", "d": 4}}"#,
    );
    let o = lab(&["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let o = lab(&["certify", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn passing_run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"generator": {"family": "pca", "d": 6, "seed": 4}}"#);
    let out = dir.path().join("out");
    let o = lab(&["landscape-sweep", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["passed"], serde_json::json!(true));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config_echo"]["master_seed"], serde_json::json!(9));
    assert!(out.join("rows.csv").exists());
    assert!(out.join("plots/scatter.csv").exists());
    assert!(out.join("plots/decay.csv").exists());
}

#[test]
fn failing_check_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"generator": {"family": "glm", "d": 3, "family_params": {"n": 20}}, "params": {"rel_tol": 1e-30}}"#,
    );
    let o = lab(&["check-grad", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("FAIL check-grad"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"generator": {"family": "tensor", "d": 4, "seed": 2}, "n_runs": 5, "instance_per_run": true}"#,
    );
    let rows = |name: &str| {
        let out = dir.path().join(name);
        let o = lab(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out.join("rows.csv")).unwrap()
    };
    assert_eq!(rows("a"), rows("b"));
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"generator": {"family": "pca", "d": 4}}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_landscape-lab"))
        .args(["certify", "--config", &cfg])
        .env("LANDSCAPE_LAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_landscape-lab"))
        .args(["certify", "--config", &cfg])
        .env("LANDSCAPE_LAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn generate_writes_instance_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "s.json", r#"{"family": "tensor", "d": 3, "seed": 1}"#);
    let out = dir.path().join("inst.json");
    let o = lab(&["generate", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let inst: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(inst["family"], serde_json::json!("tensor"));

    let bad = write(dir.path(), "bad.json", r#"{"family": "mc", "d": 3}"#);
    let o = lab(&["generate", "--spec", &bad]);
    assert_eq!(o.status.code(), Some(2));
}
