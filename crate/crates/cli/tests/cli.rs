//! End-to-end checks of the compiled binary: exit codes, verdict lines on
//! stdout, the machine-readable error JSON on stderr, and the record/error
//! artifacts in the output directory.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phenokpp"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process should exit normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A minimal eigen config on a flat landscape; λ is exactly the constant.
fn eigen_config(outdir: &Path, expect_lambda: f64) -> String {
    format!(
        r#"output_dir = "{}"

[[experiment]]
name = "flat-eigen"
kind = "eigen"
diffusivity = 1.0
expect_lambda = {expect_lambda}
lambda_tol = 1e-9

[experiment.landscape]
preset = "constant"
params = {{ c = 0.25 }}

[experiment.grid]
space_nodes = 8
pheno_nodes = 9
pheno_extent = 1.0
"#,
        outdir.display()
    )
}

#[test]
fn seed_check_passes_and_prints_the_summary_line() {
    let out = run(&["--seed-check"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("seed check passed"),
        "missing summary line in: {text}"
    );
    assert!(
        !text.contains("FAIL"),
        "seed check reported a failing line: {text}"
    );
}

#[test]
fn eigen_run_passes_and_writes_a_parsable_record() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(&config, eigen_config(&outdir, 0.25)).unwrap();

    let out = run(&["eigen", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS flat-eigen"), "stdout: {text}");

    let record_path = outdir.join("flat-eigen.record.json");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&record_path).unwrap()).unwrap();
    assert_eq!(record["passed"], serde_json::Value::Bool(true));
    let lambda = record["points"]["lambda"].as_f64().expect("lambda field");
    assert!(
        (lambda - 0.25).abs() <= 1e-9,
        "recorded lambda {lambda} should be the flat-landscape constant"
    );
}

#[test]
fn failed_expectation_exits_one_and_writes_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let outdir = dir.path().join("override");
    let config = dir.path().join("run.toml");
    // λ is exactly 0.25 here, so expecting 5.0 must fail the verdict.
    fs::write(&config, eigen_config(&dir.path().join("unused"), 5.0)).unwrap();

    let out = run(&[
        "eigen",
        "--config",
        config.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"), "stdout: {}", stdout(&out));

    let error: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outdir.join("error.json")).unwrap()).unwrap();
    assert_eq!(error["exit_code"], serde_json::json!(1));
    assert!(
        error["message"].as_str().unwrap().contains("flat-eigen"),
        "error message should name the failing experiment: {error}"
    );
    // The record itself is still written — the run completed, it just failed.
    assert!(outdir.join("flat-eigen.record.json").exists());
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = run(&["eigen"]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("--config"),
        "stderr should point at the missing flag: {}",
        stderr(&out)
    );
}

#[test]
fn missing_config_file_reports_the_path() {
    let out = run(&["eigen", "--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("/nonexistent/run.toml"),
        "stderr should carry the path: {}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_key_is_named_in_the_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("typo.toml");
    let text = eigen_config(&dir.path().join("out"), 0.25)
        .replace("diffusivity = 1.0", "diffusionn = 1.0");
    fs::write(&config, text).unwrap();

    let out = run(&["eigen", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("diffusionn"),
        "stderr should name the unknown key: {}",
        stderr(&out)
    );
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = run(&[]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("seed-check"),
        "stderr should mention the available entry points: {}",
        stderr(&out)
    );
}
