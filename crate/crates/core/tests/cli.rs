mod common;

use std::process::Command;

use common::cli_runs::{rerun_and_compare, EXPECTED_CSVS};

#[test]
fn reruns_reproduce_every_output_byte_for_byte() {
    let matched = rerun_and_compare().unwrap();
    assert!(matched >= EXPECTED_CSVS.len());
}

#[test]
fn invalid_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.bin");
    let result =
        Command::new(env!("CARGO_BIN_EXE_dasp")).args(["train", "--data", missing.to_str().unwrap()]).output().unwrap();
    assert!(!result.status.success());
    assert!(String::from_utf8_lossy(&result.stderr).contains("nope.bin"));

    let result = Command::new(env!("CARGO_BIN_EXE_dasp"))
        .args(["gen-data", "--size", "10", "--set", "alpha=-1"])
        .arg("--out")
        .arg(dir.path().join("d.bin"))
        .output()
        .unwrap();
    assert!(!result.status.success());
}
