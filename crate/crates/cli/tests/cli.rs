use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_latticenf"))
}

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    bin().args(args).arg("--config").arg(&cfg).arg("--output").arg(dir.join("out")).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const DESK: &str = r#"{"d": 1, "L": 4, "sigma": 2.0, "eps": 0.001, "eta": 0.1, "M": 8, "seed": 1}"#;

#[test]
fn selftest_passes_and_reports_suites() {
    let out = bin().arg("selftest").output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["suites"].as_array().unwrap().len() >= 7);
}

#[test]
fn corrupted_bracket_is_caught_by_antisymmetry() {
    let out = bin().args(["selftest", "--corrupt-bracket-sign"]).output().unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("antisymmetry"));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["first_failure"], "antisymmetry");
}

#[test]
fn nonres_generic_and_degenerate() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), DESK, &["nonres"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(dir.path().join("out/nonres_report.json")).unwrap();
    let out = run(dir.path(), DESK, &["nonres"]);
    assert_eq!(code(&out), 0);
    assert_eq!(first, fs::read(dir.path().join("out/nonres_report.json")).unwrap());

    let zero = DESK.replace("\"seed\": 1", "\"seed\": 1, \"media\": \"zero\", \"inner\": \"zero\"");
    let out = run(dir.path(), &zero, &["nonres"]);
    assert_eq!(code(&out), 1);
    let v = read_json(&dir.path().join("out/nonres_report.json"));
    assert!(!v["report"]["violations"].as_array().unwrap().is_empty());
}

#[test]
fn measure_estimate_within_eta() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"d": 1, "L": 4, "sigma": 2.0, "eps": 0.1, "eta": 0.1, "M": 4, "seed": 7,
                  "trials": 2000, "media": "zero"}"#;
    let out = run(dir.path(), cfg, &["measure"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("out/measure_mc.json"));
    assert_eq!(v["pass"], true);
    assert_eq!(v["result"]["trials"], 2000);
    assert!(v["result"]["fraction_resonant"].as_f64().unwrap() > 0.0);

    let few = cfg.replace("2000", "50");
    assert_eq!(code(&run(dir.path(), &few, &["measure"])), 2);
}

#[test]
fn normal_form_desk_run_and_resume() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), DESK, &["normal-form"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out");
    let ledger = read_json(&base.join("bound_ledger.json"));
    assert_eq!(ledger["z_final_action_only"], true);
    assert_eq!(ledger["report"]["steps"], 2);
    assert!(ledger["report"]["max_bound_ratio"].as_f64().unwrap() <= 1.0);
    let full = fs::read(base.join("bound_ledger.json")).unwrap();
    let last = fs::read(base.join("checkpoints/stage_003.json")).unwrap();

    let again = TempDir::new().unwrap();
    let cfg = again.path().join("config.json");
    fs::write(&cfg, DESK).unwrap();
    let out = bin()
        .args(["normal-form", "--resume"])
        .arg(base.join("checkpoints/stage_002.json"))
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(again.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(full, fs::read(again.path().join("out/bound_ledger.json")).unwrap());
    assert_eq!(last, fs::read(again.path().join("out/checkpoints/stage_003.json")).unwrap());

    // A checkpoint from another configuration is refused.
    fs::write(&cfg, DESK.replace("\"seed\": 1", "\"seed\": 2")).unwrap();
    let out = bin()
        .args(["normal-form", "--resume"])
        .arg(base.join("checkpoints/stage_002.json"))
        .arg("--config")
        .arg(&cfg)
        .arg("--output")
        .arg(again.path().join("other"))
        .output()
        .unwrap();
    assert_ne!(code(&out), 0);
}

#[test]
fn normal_form_integrable_instance() {
    let dir = TempDir::new().unwrap();
    let cfg = DESK.replace("\"seed\": 1", "\"seed\": 1, \"perturbation\": \"none\"");
    let out = run(dir.path(), &cfg, &["normal-form"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("out/bound_ledger.json"));
    assert_eq!(v["report"]["remainder_bound"], 0.0);
}

#[test]
fn simulate_without_perturbation_has_no_drift() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"d": 1, "L": 4, "sigma": 2.0, "eps": 0.05, "eta": 0.1, "seed": 5,
                  "T": 10, "dt": 0.01, "perturbation": "none"}"#;
    let out = run(dir.path(), cfg, &["simulate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("out/drift_report.json"));
    assert_eq!(v["report"]["weighted_sup"], 0.0);
    let csv = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(csv.starts_with("# format_version 1\n"));
}

#[test]
fn simulate_small_coupling_stays_local() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"d": 1, "L": 4, "sigma": 2.0, "eps": 0.05, "eta": 0.1, "seed": 5, "T": 10, "dt": 0.01}"#;
    let out = run(dir.path(), cfg, &["simulate"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("out/drift_report.json"));
    assert!(v["report"]["escape_time"].is_null());
    assert!(v["max_relative_energy_error"].as_f64().unwrap() < 1e-6);
}

#[test]
fn simulate_detects_escape_under_amplified_coupling() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"d": 1, "L": 4, "sigma": 1.0, "eps": 0.1, "eta": 0.1, "seed": 5, "T": 10, "dt": 0.001}"#;
    let out = run(dir.path(), cfg, &["simulate", "--test-perturbation-scale", "1000"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&dir.path().join("out/drift_report.json"));
    assert!(v["report"]["escape_time"].as_f64().is_some());
}

#[test]
fn configuration_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let unknown = DESK.replace("\"seed\": 1", "\"seed\": 1, \"sigmaa\": 2");
    let out = run(dir.path(), &unknown, &["nonres"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigmaa"));

    let bad_eps = DESK.replace("0.001", "1.5");
    let out = run(dir.path(), &bad_eps, &["nonres"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`eps`"));

    let out = bin().arg("nonres").output().unwrap();
    assert_eq!(code(&out), 2);
}
