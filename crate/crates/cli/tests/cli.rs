use std::path::Path;
use std::process::{Command, Output};

fn alertopt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alertopt"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_trajectory_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["simulate", "--model", "tp", "--days", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows = text.lines().count();
    assert!(rows > 100, "only {rows} rows");
    assert!(text.starts_with("t_h,"));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "simulate");
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_days_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["simulate", "--days", "0"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.starts_with("0.0,") || line.starts_with("0,"), "{line}");
    }
}

#[test]
fn unknown_model_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["simulate", "--model", "two-process"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown model"));
}

#[test]
fn negative_days_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["simulate", "--days=-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_params_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("params.json");
    std::fs::write(&p, "{ not json").unwrap();
    let o = alertopt(dir.path(), &["--params", p.to_str().unwrap(), "entrain"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(
        dir.path(),
        &["validate", "--dataset", "does/not/exist.csv", "--label", "VAS"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping"));
}

#[test]
fn entrain_reports_wake_and_sleep() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["entrain"]);
    assert!(o.status.success());
    let s: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("entrain.json")).unwrap())
            .unwrap();
    let wake = s["wake_h"].as_f64().unwrap();
    let sleep = s["sleep_h"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&wake), "wake {wake}");
    assert!((15.0..17.0).contains(&sleep), "sleep {sleep}");
}

#[test]
fn branches_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["branches", "--step", "0.1"]);
    assert!(o.status.success());
    let rows = std::fs::read_to_string(dir.path().join("branches.csv")).unwrap();
    assert_eq!(rows.lines().count(), 42);
    let o = alertopt(dir.path(), &["branches", "--d-min", "2", "--d-max", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimize_rejects_bad_init_and_unknown_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = alertopt(dir.path(), &["optimize", "--scenario", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
    let init = dir.path().join("init.json");
    std::fs::write(&init, r#"{"light": {"start_h": 2.0, "step_h": 0.1, "values_lux": [100.0]}, "switches": []}"#)
        .unwrap();
    let o = alertopt(
        dir.path(),
        &["optimize", "--scenario", "night_shifts_naps", "--init", init.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn optimize_then_restart_from_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("short.json");
    std::fs::write(
        &scenario,
        r#"{"t0_h": 6.0, "tf_h": 30.0, "objective": "cumulative",
            "work_intervals": [[16.0, 24.0]], "optimizer": {"max_iters": 5}}"#,
    )
    .unwrap();
    let first = dir.path().join("first");
    let o = alertopt(&first, &["optimize", "--scenario", scenario.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["schedule.json", "trajectory.csv", "iterations.csv", "summary.json", "manifest.json"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.join("summary.json")).unwrap()).unwrap();
    assert!(summary["j"].as_f64().unwrap() <= summary["initial_j"].as_f64().unwrap());

    let second = dir.path().join("second");
    let sched = first.join("schedule.json");
    let o = alertopt(
        &second,
        &["optimize", "--scenario", scenario.to_str().unwrap(), "--init", sched.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut vars: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sched).unwrap()).unwrap();
    vars["light"]["values_lux"][3] = serde_json::json!(1.0e5);
    let bright = dir.path().join("bright.json");
    std::fs::write(&bright, vars.to_string()).unwrap();
    let o = alertopt(
        &dir.path().join("third"),
        &["optimize", "--scenario", scenario.to_str().unwrap(), "--init", bright.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("constraint"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_alertopt"))
        .env("ALERTOPT_OUT", dir.path())
        .args(["simulate", "--days", "0.5"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("manifest.json").exists());
}
