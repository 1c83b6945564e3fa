//! End-to-end tests of the `ghicast` binary: exit codes, determinism,
//! config precedence, and the full synth -> train -> eval -> sweep ->
//! report chain on small synthetic grids.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ghicast")
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ghicast-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn ghicast")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process had no exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert_eq!(
        code(out),
        0,
        "command failed\nstdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

/// Small shared fixture: a 2x2 grid, 40 days of hours.
fn synth_small(dir: &Path, name: &str) {
    let out = run_in(
        dir,
        &["synth", "--grid", "2x2", "--hours", "960", "--seed", "1", "--out", name],
    );
    assert_ok(&out);
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = workdir("help");
    for args in [
        vec!["--help"],
        vec!["synth", "--help"],
        vec!["train", "--help"],
        vec!["eval", "--help"],
        vec!["sweep", "--help"],
        vec!["report", "--help"],
    ] {
        let out = run_in(&dir, &args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(stdout(&out).contains("--help"), "{args:?}");
    }
    let out = run_in(&dir, &["train", "--help"]);
    let text = stdout(&out);
    for flag in ["--model", "--lead", "--seed", "default"] {
        assert!(text.contains(flag), "train --help missing {flag}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn synth_row_count_determinism_and_bad_grid() {
    let dir = workdir("synth");
    let out = run_in(
        &dir,
        &["synth", "--grid", "5x5", "--hours", "48", "--seed", "7", "--out", "a.csv"],
    );
    assert_ok(&out);
    let a = std::fs::read(dir.join("a.csv")).unwrap();
    let lines = a.iter().filter(|&&b| b == b'\n').count();
    assert_eq!(lines, 1 + 5 * 5 * 48);

    let out = run_in(
        &dir,
        &["synth", "--grid", "5x5", "--hours", "48", "--seed", "7", "--out", "b.csv"],
    );
    assert_ok(&out);
    let b = std::fs::read(dir.join("b.csv")).unwrap();
    assert_eq!(a, b, "same flags must produce identical files");

    let out = run_in(&dir, &["synth", "--grid", "0x5", "--hours", "48", "--out", "c.csv"]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    let out = run_in(&dir, &["synth", "--grid", "5x5", "--hours", "0", "--out", "c.csv"]);
    assert_eq!(code(&out), 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn train_writes_model_and_reports_epochs() {
    let dir = workdir("train");
    synth_small(&dir, "d.csv");
    let out = run_in(
        &dir,
        &[
            "train", "--data", "d.csv", "--model", "ffnn", "--mode", "single", "--lead", "1",
            "--p", "6", "--epochs", "2", "--batch", "128", "--out", "m.ghim",
        ],
    );
    assert_ok(&out);
    assert!(stdout(&out).contains("epochs 2"), "stdout: {}", stdout(&out));
    let bundle = ghicast::persist::load_model(&dir.join("m.ghim")).unwrap();
    assert_eq!(bundle.spec.p, 6);
    assert_eq!(bundle.spec.lead, 1);
    assert_eq!(bundle.payload.label(), "FFNN");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn lead_out_of_range_is_usage_error() {
    let dir = workdir("lead");
    let out = run_in(&dir, &["train", "--data", "d.csv", "--lead", "25"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("25"), "stderr: {}", stderr(&out));
    // same limit when the value comes from a config file
    std::fs::write(dir.join("c.conf"), "lead = 25\n").unwrap();
    let out = run_in(&dir, &["train", "--data", "d.csv", "--config", "c.conf"]);
    assert_eq!(code(&out), 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn gbrt_depth_defaults_by_mode() {
    let dir = workdir("gbrt-depth");
    synth_small(&dir, "d.csv");
    let base = [
        "train", "--data", "d.csv", "--model", "gbrt", "--lead", "1", "--p", "3", "--rounds",
        "3", "--out", "m.ghim",
    ];
    let mut single = base.to_vec();
    single.extend(["--mode", "single"]);
    let out = run_in(&dir, &single);
    assert_ok(&out);
    assert!(stdout(&out).contains("depth 6"), "stdout: {}", stdout(&out));

    let mut multi = base.to_vec();
    multi.extend(["--mode", "multi", "--neighbors", "3", "--p-prime", "2"]);
    let out = run_in(&dir, &multi);
    assert_ok(&out);
    assert!(stdout(&out).contains("depth 8"), "stdout: {}", stdout(&out));

    let mut multi_explicit = multi.clone();
    multi_explicit.extend(["--depth", "4"]);
    let out = run_in(&dir, &multi_explicit);
    assert_ok(&out);
    assert!(stdout(&out).contains("depth 4"), "stdout: {}", stdout(&out));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_feature_dim_mismatch_names_expected_dim() {
    let dir = workdir("eval-dim");
    synth_small(&dir, "d.csv");
    let out = run_in(
        &dir,
        &[
            "train", "--data", "d.csv", "--model", "gbrt", "--mode", "single", "--p", "4",
            "--rounds", "3", "--min-leaf", "5", "--out", "m.ghim",
        ],
    );
    assert_ok(&out);
    // a dump with p=3 has the wrong width for the p=4 model
    let out = run_in(
        &dir,
        &[
            "train", "--data", "d.csv", "--model", "gbrt", "--mode", "single", "--p", "3",
            "--rounds", "3", "--min-leaf", "5", "--out", "m3.ghim", "--dump-features", "f3.csv",
        ],
    );
    assert_ok(&out);
    let out = run_in(&dir, &["eval", "--model-file", "m.ghim", "--features", "f3.csv"]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("expected 4"), "stderr: {}", stderr(&out));

    // matching dump scores fine and writes a report row
    let out = run_in(
        &dir,
        &["eval", "--model-file", "m3.ghim", "--features", "f3.csv", "--out", "r.csv"],
    );
    assert_ok(&out);
    let report = std::fs::read_to_string(dir.join("r.csv")).unwrap();
    assert!(report.starts_with("model,mode,T,mae,rmse\n"));
    assert!(report.contains("GBRT,1,1,"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = workdir("missing");
    let out = run_in(&dir, &["train", "--data", "nope.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("nope.csv"));
    let out = run_in(&dir, &["eval", "--model-file", "nope.ghim"]);
    assert_eq!(code(&out), 2);
    let out = run_in(&dir, &["report", "--single", "nope.csv", "--multi", "nope.csv"]);
    assert_eq!(code(&out), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_precedence_and_unknown_keys() {
    let dir = workdir("config");
    synth_small(&dir, "d.csv");
    std::fs::write(dir.join("c.conf"), "model = gbrt\nrounds = 3\np = 3 # lag window\n")
        .unwrap();
    let base = ["train", "--data", "d.csv", "--config", "c.conf", "--out", "m.ghim"];
    let out = run_in(&dir, &base);
    assert_ok(&out);
    assert!(stdout(&out).contains("rounds 3"), "stdout: {}", stdout(&out));

    let mut flagged = base.to_vec();
    flagged.extend(["--rounds", "5"]);
    let out = run_in(&dir, &flagged);
    assert_ok(&out);
    assert!(stdout(&out).contains("rounds 5"), "flag must beat config file");

    std::fs::write(dir.join("bad.conf"), "no_such_knob = 1\n").unwrap();
    let out = run_in(&dir, &["train", "--data", "d.csv", "--config", "bad.conf"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no_such_knob"));

    std::fs::write(dir.join("dup.conf"), "rounds = 3\nrounds = 4\n").unwrap();
    let out = run_in(&dir, &["train", "--data", "d.csv", "--config", "dup.conf"]);
    assert_eq!(code(&out), 1);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_is_deterministic_and_report_compares() {
    let dir = workdir("sweep");
    // two calendar years so sweep's default split works
    let out = run_in(
        &dir,
        &["synth", "--grid", "2x2", "--hours", "17544", "--seed", "3", "--out", "d.csv"],
    );
    assert_ok(&out);
    let sweep = [
        "sweep", "--data", "d.csv", "--model", "gbrt", "--mode", "single", "--p", "3",
        "--rounds", "4", "--leads", "1,2", "--jobs", "2",
    ];
    let mut s1 = sweep.to_vec();
    s1.extend(["--out", "r1.csv"]);
    let out = run_in(&dir, &s1);
    assert_ok(&out);
    assert!(stdout(&out).contains("GBRT-1"));
    let mut s2 = sweep.to_vec();
    s2.extend(["--out", "r2.csv"]);
    let out = run_in(&dir, &s2);
    assert_ok(&out);
    let r1 = std::fs::read(dir.join("r1.csv")).unwrap();
    let r2 = std::fs::read(dir.join("r2.csv")).unwrap();
    assert_eq!(r1, r2, "sweep outputs must be byte-identical across runs");
    let lines = r1.iter().filter(|&&b| b == b'\n').count();
    assert_eq!(lines, 3, "header + one row per lead");

    // identical single/multi inputs -> all improvements exactly 0%
    let out = run_in(
        &dir,
        &["report", "--single", "r1.csv", "--multi", "r2.csv", "--out", "merged.csv"],
    );
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("T=1 improvement 0.0%"), "stdout: {text}");
    assert!(text.contains("T=2 improvement 0.0%"), "stdout: {text}");
    assert!(dir.join("merged.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_requires_both_year_ranges_or_neither() {
    let dir = workdir("sweep-years");
    synth_small(&dir, "d.csv");
    let out = run_in(
        &dir,
        &["sweep", "--data", "d.csv", "--model", "gbrt", "--p", "3", "--leads", "1",
          "--train-years", "2000"],
    );
    assert_eq!(code(&out), 1);
    // single-year data without explicit ranges is rejected with guidance
    let out = run_in(
        &dir,
        &["sweep", "--data", "d.csv", "--model", "gbrt", "--p", "3", "--leads", "1"],
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--train-years"), "stderr: {}", stderr(&out));
    std::fs::remove_dir_all(&dir).ok();
}
