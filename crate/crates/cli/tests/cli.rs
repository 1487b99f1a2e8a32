//! End-to-end tests of the `selfreg` binary: flag parsing, config-file
//! merging, artifact layout, exit codes and output formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn selfreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfreg"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr should be UTF-8")
}

/// A small but non-degenerate config: windowless scenario, 24 steps, two
/// plans over four agents.
const SMALL: &[&str] = &[
    "--scenario",
    "max-entropy",
    "--agents",
    "4",
    "--horizon",
    "24",
    "--plans",
    "2",
    "--arity",
    "2",
];

fn small_run(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--out", out]);
    args.extend_from_slice(extra);
    selfreg(&args)
}

#[test]
fn run_writes_artifacts_and_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let output = small_run(dir.path(), &["--seed", "9"]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));

    for file in [
        "config.json",
        "signals.csv",
        "selections.csv",
        "report.json",
    ] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert!(report["tag"].as_str().unwrap().contains("max-entropy"));
    assert!(report["ub1"]["response"].is_number());
    assert!(report["ub2"]["savings"].is_number());

    // Same seed, fresh directory: byte-identical signal and selection files.
    let again = tempfile::tempdir().unwrap();
    let rerun = small_run(again.path(), &["--seed", "9"]);
    assert!(rerun.status.success());
    for file in ["signals.csv", "selections.csv"] {
        let a = fs::read(dir.path().join(file)).unwrap();
        let b = fs::read(again.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        r#"{"scenario":"max-entropy","agents":6,"horizon":24,"plans":2,"arity":2,"seed":3}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let output = selfreg(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--agents",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));

    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["agents"], 3, "flag should beat the file");
    assert_eq!(written["seed"], 3, "file keys without flags should survive");
    // Three agents leave exactly three selection rows (plus the header).
    let selections = fs::read_to_string(out.join("selections.csv")).unwrap();
    assert_eq!(selections.lines().count(), 4);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("typo.json");
    fs::write(&config, r#"{"agnets": 4}"#).unwrap();
    let output = selfreg(["run", "--config", config.to_str().unwrap()].as_ref());
    assert!(!output.status.success());
    assert!(
        stderr_of(&output).contains("agnets"),
        "stderr: {}",
        stderr_of(&output)
    );
}

#[test]
fn invalid_flag_values_fail_fast() {
    let output = selfreg(&["run", "--scheme", "bogus"]);
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("bogus"));

    let output = selfreg(&["run", "--source", "parquet:/tmp/x"]);
    assert!(!output.status.success());
}

#[test]
fn grid_writes_tables_and_exits_zero_when_all_cells_pass() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["grid"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&[
        "--selections",
        "min-cost,min-rmse-ub2",
        "--replications",
        "2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let output = selfreg(&args);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    // Header plus 2 selections × 2 replications.
    assert_eq!(summary.lines().count(), 5);
    assert_eq!(summary.matches(",ok,").count(), 4);
    assert!(dir.path().join("correlations.json").exists());
    // One artifact directory per cell, named by its tag.
    let cell_dirs = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(cell_dirs, 4);
}

#[test]
fn grid_reports_failed_cells_with_nonzero_exit() {
    let mut args = vec!["grid"];
    args.extend_from_slice(SMALL);
    // shift:24 is invalid at T=24; the other cell still runs.
    args.extend_from_slice(&["--schemes", "shuffle,shift:24"]);
    let output = selfreg(&args);
    assert!(!output.status.success());
    let stderr = stderr_of(&output);
    assert!(stderr.contains("1 of 2 cells failed"), "stderr: {stderr}");
    // The table still covers both cells: one ok, one failed.
    let stdout = stdout_of(&output);
    assert!(stdout.contains(",ok,"));
    assert!(stdout.contains(",failed,"));
}

#[test]
fn grid_without_out_prints_table_and_correlations() {
    let mut args = vec!["grid"];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(&["--selections", "min-cost,min-rmse-ub1,min-rmse-ub2"]);
    let output = selfreg(&args);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let stdout = stdout_of(&output);
    assert!(stdout.starts_with("tag,scenario,scheme,selection,source"));
    // Correlation rows for the one varying aspect follow the table.
    assert!(stdout.contains("\"aspect\": \"selection-function\""));
}

#[test]
fn diff_measures_selection_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(small_run(&a, &["--seed", "11"]).status.success());
    assert!(small_run(&b, &["--seed", "12"]).status.success());

    let same = selfreg(&[
        "diff",
        a.join("selections.csv").to_str().unwrap(),
        a.join("selections.csv").to_str().unwrap(),
    ]);
    assert!(same.status.success());
    assert!(stdout_of(&same).contains("0 of 4 selections differ"));

    let cross = selfreg(&[
        "diff",
        a.join("selections.csv").to_str().unwrap(),
        b.join("selections.csv").to_str().unwrap(),
    ]);
    assert!(cross.status.success());
    assert!(stdout_of(&cross).contains("of 4 selections differ"));
}

#[test]
fn entropy_scan_finds_crafted_windows() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    // 600 noisy points, a constant run at 100 and a lone spike at 310.
    let mut text = String::from("t,value\n");
    for t in 0..600usize {
        let value = if (100..124).contains(&t) {
            5.0
        } else if t == 310 {
            1e6
        } else if (300..324).contains(&t) {
            1e-3
        } else {
            10.0 + ((t % 7) as f64) * 3.0
        };
        text.push_str(&format!("{t},{value}\n"));
    }
    fs::write(&series, text).unwrap();

    let out = dir.path().join("windows");
    let output = selfreg(&[
        "entropy-scan",
        series.to_str().unwrap(),
        "--horizon",
        "24",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let scan: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(
        scan["max"]["start"], 100,
        "constant window maximizes entropy"
    );
    assert_eq!(scan["min"]["start"], 300, "spike window minimizes entropy");
    for file in ["min_window.csv", "max_window.csv"] {
        let window = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(window.lines().count(), 25, "{file} should hold one window");
    }
}

#[test]
fn diversity_covers_the_five_default_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let samples = dir.path().join("samples.csv");
    let output = selfreg(&[
        "diversity",
        "--samples",
        "25",
        "--out",
        samples.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let stdout = stdout_of(&output);
    assert_eq!(stdout.lines().count(), 6, "header plus five schemes");
    // Deterministic rotations have a single-point distribution.
    let shift20 = stdout.lines().find(|l| l.starts_with("shift:20,")).unwrap();
    assert_eq!(shift20.split(',').nth(2), Some("0"));
    let raw = fs::read_to_string(&samples).unwrap();
    assert_eq!(raw.lines().count(), 1 + 5 * 25);
}
