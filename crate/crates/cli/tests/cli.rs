use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sgldvr(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgldvr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Quadratic with d = 3, so L = 6, run at η₀ = `eta0`.
fn run_config(dir: &Path, eta0: f64) -> String {
    let cfg = format!(
        r#"{{"objective": {{"kind": "quadratic", "d": 3, "scale": 1.0}},
            "config": {{"batch_size": 1, "epoch_length": 10, "horizon": 200,
                        "schedule": {{"kind": "decay", "eta0": {eta0}, "rho0": 0.01, "nu": 1.0}}}},
            "seed": 7}}"#
    );
    fs::write(dir.join("run.json"), cfg).unwrap();
    "run.json".into()
}

#[test]
fn validate_reports_infeasible_at_two_over_l() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), 2.0 / 6.0);
    let o = sgldvr(&["validate", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("infeasible"), "{}", stdout(&o));

    let cfg = run_config(dir.path(), 1e-4);
    let o = sgldvr(&["validate", "--config", &cfg], dir.path());
    assert!(stdout(&o).starts_with("feasible"), "{}", stdout(&o));
}

#[test]
fn runs_are_byte_identical_and_seed_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), 0.1);
    let mut outputs = Vec::new();
    for out in ["a", "b"] {
        let o = sgldvr(&["run", "--config", &cfg, "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(dir.path().join(out).join("run_sgld_vr_7.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let o = sgldvr(&["run", "--config", &cfg, "--out", "c", "--seed", "8", "--method", "sgd"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("c/run_sgd_8.csv").exists());
    assert!(dir.path().join("c/run_sgd_8.json").exists());
}

#[test]
fn variance_campaign_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = sgldvr(&["campaign", "variance", "--out", "out", "--jobs", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
    assert!(dir.path().join("out/variance_trials.csv").exists());
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/variance_verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["passed"], true);
}

#[test]
fn failed_verdict_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"n_trials": 5,
                  "config": {"batch_size": 1, "epoch_length": 10, "horizon": 20,
                             "schedule": {"kind": "decay", "eta0": 1.0, "rho0": 0.01, "nu": 1.0}}}"#;
    fs::write(dir.path().join("saddle.json"), cfg).unwrap();
    let o = sgldvr(&["campaign", "saddle", "--config", "saddle.json"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sgldvr(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(sgldvr(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(sgldvr(&["campaign", "nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(sgldvr(&["run", "--config", "missing.json"], dir.path()).status.code(), Some(2));

    fs::write(dir.path().join("typo.json"), r#"{"objective": {"kind": "quadratic", "d": 2}, "confg": {}}"#).unwrap();
    let o = sgldvr(&["validate", "--config", "typo.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    fs::write(dir.path().join("wrong.json"), r#"{"campaign": "saddle"}"#).unwrap();
    let o = sgldvr(&["campaign", "variance", "--config", "wrong.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(sgldvr(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn oracle_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("o.json"), r#"{"values": [[1.0], [2.0], [3.0], [7.0]], "b": 2}"#).unwrap();
    let o = sgldvr(&["oracle", "--config", "o.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["abs_diff"].as_f64().unwrap() <= 1e-12);
    // spread 5.1875 scaled by (4 − 2)/(3·2)
    assert!((v["closed_form"].as_f64().unwrap() - 5.1875 / 3.0).abs() < 1e-12);
}
