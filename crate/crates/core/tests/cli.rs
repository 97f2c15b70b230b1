//! End-to-end runs of the `gs-vsp` binary: outputs, determinism and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use gs_vsp::config::DEFAULT_CONFIG_JSON;

fn gs_vsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gs-vsp")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--out", dir.to_str().unwrap()];
    all.extend_from_slice(args);
    gs_vsp(&all)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> String {
    let mut v: Value = serde_json::from_str(DEFAULT_CONFIG_JSON).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn synthesize_writes_model_with_three_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["synthesize"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let model = read_json(&dir.path().join("model.json"));
    let points = model["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    let angles: Vec<f64> = points.iter().map(|p| p["theta2_deg"].as_f64().unwrap()).collect();
    assert_eq!(angles, [150.0, 60.0, -90.0]);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
}

#[test]
fn invalid_mode_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), &["simulate", "--mode", "diagonal"])), 2);
}

#[test]
fn zero_feedthrough_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["synthesis"]["feedthrough"] = 0.0.into());
    let out = run_in(dir.path(), &["--config", &cfg, "synthesize"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("model.json").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), |v| v["scheduling"]["beta"] = 1.0.into());
    assert_eq!(code(&run_in(dir.path(), &["--config", &cfg, "compare"])), 2);
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run_in(dir.path(), &["--config", missing.to_str().unwrap(), "synthesize"])), 2);
}

#[test]
fn scheduling_gap_fails_certification() {
    let dir = tempfile::tempdir().unwrap();
    // s1 reaches zero at its end point, so nothing is scheduled on [2, 2.5)
    let cfg = write_config(dir.path(), |v| {
        v["scheduling"]["signals"]["s1_end"] = 2.0.into();
        v["scheduling"]["signals"]["s2_start"] = 2.5.into();
    });
    let out = run_in(dir.path(), &["--config", &cfg, "audit", "--mode", "matrix"]);
    assert_eq!(code(&out), 4);
    let report = read_json(&dir.path().join("audit_matrix.json"));
    assert_eq!(report["strongly_active"], false);
    assert_eq!(report["active"], false);
    let t = report["first_not_strongly_active"].as_f64().unwrap();
    assert!((t - 2.0).abs() < 1e-9, "first failure at {t}");
    assert!(report["indices"].is_null());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not strongly active"));
}

#[test]
fn audit_passes_for_builtin_schedules() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["matrix", "scalar"] {
        let out = run_in(dir.path(), &["audit", "--mode", mode]);
        assert_eq!(code(&out), 0, "{mode}: {}", String::from_utf8_lossy(&out.stderr));
        let report = read_json(&dir.path().join(format!("audit_{mode}.json")));
        assert_eq!(report["strongly_active"], true);
        assert_eq!(report["audit"]["passed"], true);
        assert_eq!(report["audit"]["horizons"].as_array().unwrap().len(), 50);
    }
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&run_in(a.path(), &["compare"])), 0);
    assert_eq!(code(&run_in(b.path(), &["compare"])), 0);
    let ta = std::fs::read(a.path().join("table4.csv")).unwrap();
    let tb = std::fs::read(b.path().join("table4.csv")).unwrap();
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    let modes: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(text.lines().next().unwrap(), "mode,e1,e2,edot1,edot2");
    assert_eq!(modes, ["unscheduled", "scalar", "matrix"]);
    // the second run in the same directory reuses model.json and still agrees
    assert_eq!(code(&run_in(a.path(), &["compare"])), 0);
    assert_eq!(std::fs::read(a.path().join("table4.csv")).unwrap(), tb);
}

#[test]
fn single_step_horizon_gives_near_zero_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--horizon", "0.001", "compare"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("table4.csv")).unwrap();
    for line in text.lines().skip(1) {
        for v in line.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-6, "{line}");
        }
    }
}

#[test]
fn simulate_writes_log_metrics_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--horizon", "0.5", "simulate", "--mode", "scalar"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["log_scalar.csv", "plot_angles_scalar.csv", "plot_errors_scalar.csv", "plot_torques_scalar.csv"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let m = read_json(&dir.path().join("metrics_scalar.json"));
    assert_eq!(m["mode"], "scalar");
    assert_eq!(m["rms_e_deg"].as_array().unwrap().len(), 2);
    assert_eq!(m["rms_edot_degps"].as_array().unwrap().len(), 2);
    let log = std::fs::read_to_string(dir.path().join("log_scalar.csv")).unwrap();
    // header plus one row per sample
    assert_eq!(log.lines().count(), 502);
}

#[test]
fn negative_step_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_in(dir.path(), &["--step", "-1", "simulate", "--mode", "matrix"])), 2);
}
