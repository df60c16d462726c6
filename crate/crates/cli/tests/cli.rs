use std::path::Path;
use std::process::{Command, Output};

fn flowlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn flatfn_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = flowlab(&["flatfn", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["shells_pass"], true);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out_dir = out_dir.to_str().unwrap();

    let cfg = write_config(dir.path(), r#"{"grid": {"dleta": 0.1}}"#);
    let out = flowlab(&["flatfn", "--config", &cfg, "--out", out_dir]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dleta"));

    assert_eq!(code(&flowlab(&["flatfn", "--out", out_dir, "--workers", "0"])), 2);
    assert_eq!(code(&flowlab(&["flatfn"])), 2);

    let cfg = write_config(
        dir.path(),
        r#"{"base_map": {"kind": "rotation", "angles": [0.618]}, "field": {"stopped_base": [0.3]}}"#,
    );
    assert_eq!(code(&flowlab(&["dichotomy", "--config", &cfg, "--out", out_dir])), 2);
}

#[test]
fn saturated_grid_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"samples": {"cloud_size": 300}, "entropy": {"suspension": false}}"#);
    let out_dir = dir.path().join("run");
    let out = flowlab(&["entropy", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("failed"));
}

#[test]
fn divergent_time_change_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "base_map": {"kind": "rotation", "angles": [0.618]},
            "field": {"stopped_base": [0.3]},
            "samples": {"cloud_size": 2000},
            "entropy": {"suspension": false, "time_changes": [{"kind": "flat", "floor": 0.0}]}
        }"#,
    );
    let out_dir = dir.path().join("run");
    let out = flowlab(&["entropy", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
