use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_crossing-sim");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CROSSING_SIM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let o = cli(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_report_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["run", "--scenario", "cd", "--set", "vehicle.x=60", "--out", s(&a)]);
    let outcome = json(&a.join("cd_outcome.json"));
    assert_eq!(outcome["metrics"]["pedestrian_crossed_first"], true);
    assert!(outcome["metrics"]["pedestrian_peak_speed"].as_f64().unwrap() >= 1.4);
    assert_eq!(outcome["config"]["vehicle"]["x"], 60.0);

    ok(&["report", s(&a.join("cd_trajectory.csv")), "--out", s(&b)]);
    assert_eq!(
        fs::read(a.join("cd_outcome.json")).unwrap(),
        fs::read(b.join("cd_outcome.json")).unwrap()
    );
}

#[test]
fn every_output_embeds_version_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    ok(&["run", "--scenario", "cr", "--dt", "0.025", "--out", out]);
    ok(&[
        "sweep",
        "--name",
        "cr",
        "--grid",
        "2x3",
        "--set",
        "model.horizon=15",
        "--out",
        out,
    ]);
    ok(&[
        "stochastic",
        "--gap",
        "4.58",
        "--trials",
        "5",
        "--seed",
        "1",
        "--out",
        out,
    ]);
    let mut files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 6);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        assert!(text.contains("crossing-sim 0.1.0"), "{f:?}");
        assert!(text.contains("[model]") || text.contains("\"model\""), "{f:?}");
    }
    let sweep = fs::read_to_string(dir.path().join("sweep_cr.csv")).unwrap();
    assert!(sweep.contains("# horizon = 15.0"));
    assert_eq!(data_rows(&dir.path().join("sweep_cr.csv")), 6);
    assert!(fs::read_to_string(dir.path().join("cr_trajectory.csv"))
        .unwrap()
        .contains("# dt = 0.025"));
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[vehicle]\nx = 90\n[world]\nt_max = 30.0\n").unwrap();
    ok(&["run", "--scenario", "cd", "--config", s(&cfg), "--out", s(dir.path())]);
    let outcome = json(&dir.path().join("cd_outcome.json"));
    assert_eq!(outcome["config"]["vehicle"]["x"], 90.0);
    assert_eq!(outcome["config"]["world"]["t_max"], 30.0);
}

#[test]
fn unknown_keys_are_listed_and_nothing_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = cli(&[
        "run",
        "--scenario",
        "cd",
        "--set",
        "vehicle.z=1",
        "--set",
        "nosuch.k=2",
        "--set",
        "world.dt=0.025",
        "--out",
        s(&out),
    ]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "unknown_keys");
    assert_eq!(err["keys"], serde_json::json!(["nosuch", "vehicle.z"]));
    assert!(!out.exists());
}

#[test]
fn failed_write_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // A directory where the JSON should go makes the second write fail.
    fs::create_dir(dir.path().join("cd_outcome.json")).unwrap();
    let o = cli(&["run", "--scenario", "cd", "--out", s(dir.path())]);
    assert!(!o.status.success());
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert!(!dir.path().join("cd_trajectory.csv").exists());
}

#[test]
fn stochastic_requires_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!cli(&["stochastic", "--gap", "2.29", "--trials", "200"])
        .status
        .success());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "stochastic",
        "--gap",
        "2.29",
        "--trials",
        "200",
        "--seed",
        "7",
        "--out",
        s(&a),
    ]);
    let o = Command::new(BIN)
        .args([
            "stochastic",
            "--gap",
            "2.29",
            "--trials",
            "200",
            "--seed",
            "7",
            "--out",
            s(&b),
        ])
        .env("CROSSING_SIM_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    for f in ["stochastic_histogram.csv", "stochastic.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = json(&a.join("stochastic.json"));
    assert_eq!(summary["trials"], 200);
}

#[test]
fn cd_sweep_grid_gives_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep", "--name", "cd", "--grid", "100x100", "--out", s(dir.path())]);
    assert_eq!(data_rows(&dir.path().join("sweep_cd.csv")), 10_000);
    let result = json(&dir.path().join("sweep_cd.json"));
    assert_eq!(result["result"]["cells"].as_array().unwrap().len(), 10_000);
}

#[test]
fn bad_arguments_fail() {
    assert!(!cli(&["run", "--scenario", "nope"]).status.success());
    assert!(!cli(&["sweep", "--name", "cd", "--grid", "10"]).status.success());
    assert!(!cli(&["run", "--scenario", "cd", "--set", "novalue"]).status.success());
    assert!(!cli(&["run", "--scenario", "cd_stoch"]).status.success());
}
