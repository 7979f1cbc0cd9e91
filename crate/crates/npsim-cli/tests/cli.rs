//! End-to-end checks of the `npsim` binary: exit codes and report files.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn npsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Unique scratch directory per test, cleaned up by the OS temp policy.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("npsim-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_scenario(dir: &std::path::Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const QUICK: &str = "\
seed = 5
duration_ms = 10
snapshot_interval_ms = 5
policy = anaqm
policy = red
[traffic]
start_window_ms = 2
";

#[test]
fn help_exits_zero() {
    let out = npsim(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("npsim"));
}

#[test]
fn run_writes_reports_and_exits_zero() {
    let dir = scratch("run");
    let scn = write_scenario(&dir, "quick.scn", QUICK);
    let out_dir = dir.join("out");
    let out = npsim(&[
        "run",
        scn.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--event-log",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for file in [
        "quick.anaqm.summary.json",
        "quick.anaqm.counters.csv",
        "quick.anaqm.events.log",
        "quick.red.summary.json",
    ] {
        let path = out_dir.join(file);
        assert!(path.is_file(), "missing report {file}");
        assert!(fs::metadata(&path).unwrap().len() > 0, "{file} is empty");
    }
    let summary = fs::read_to_string(out_dir.join("quick.anaqm.summary.json")).unwrap();
    assert!(summary.contains("\"policy\": \"anaqm\""));
}

#[test]
fn malformed_scenario_exits_one() {
    let dir = scratch("bad");
    let scn = write_scenario(&dir, "bad.scn", "seed = 1\nnot_a_key = 2\n");
    let out = npsim(&["run", scn.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn missing_file_exits_one() {
    let out = npsim(&["run", "/nonexistent/nowhere.scn"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_needs_two_policies() {
    let dir = scratch("single");
    let scn = write_scenario(&dir, "one.scn", "seed = 2\npolicy = red\n[traffic]\nstart_window_ms = 2\n");
    let out = npsim(&["compare", scn.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_congested_predicate_true_exits_zero() {
    let dir = scratch("cmp");
    let scn = write_scenario(&dir, "cmp.scn", QUICK);
    let out_dir = dir.join("out");
    let out = npsim(&[
        "compare",
        scn.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(out_dir.join("cmp.comparison.json")).unwrap();
    assert!(report.contains("\"anaqm_beats_red_on_ef_loss\": true"));
}

#[test]
fn compare_without_ef_advantage_exits_three() {
    // So little traffic that neither policy drops anything: zero is not
    // strictly below zero, so the comparison predicate fails.
    let dir = scratch("tie");
    let scn = write_scenario(
        &dir,
        "tie.scn",
        "seed = 3\nduration_ms = 5\npolicy = anaqm\npolicy = red\n\
         [traffic]\nrate_bps = 50000000\nstart_window_ms = 1\n",
    );
    let out = npsim(&[
        "compare",
        scn.to_str().unwrap(),
        "--out",
        dir.join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}
