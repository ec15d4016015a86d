//! Runs of the `dasp` binary with small settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

pub const SMALL: [&str; 9] = [
    "steps=40",
    "batch_size=32",
    "hidden=16",
    "dasp_hidden=16",
    "latent_dim=4",
    "dasp_epochs=2",
    "dasp_steps_per_epoch=5",
    "dasp_batch_size=64",
    "log_interval=20",
];

pub fn dasp(out: &Path, args: &[&str]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dasp"));
    cmd.args(args).arg("--out").arg(out).args(["--seed", "13"]);
    for kv in SMALL {
        cmd.args(["--set", kv]);
    }
    let result = cmd.output().unwrap();
    assert!(result.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&result.stderr));
}

/// Runs every subcommand into `dir` and returns the bytes of each file written.
pub fn run_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let data = dir.join("data.bin");
    let data_s = data.to_str().unwrap();
    let sub = |name: &str| -> PathBuf { dir.join(name) };
    dasp(&data, &["gen-data", "--tier", "mixture(0.3)", "--size", "1500"]);
    dasp(&sub("train-dasp"), &["train-dasp", "--data", data_s]);
    dasp(&sub("train"), &["train", "--data", data_s]);
    let dasp_ckpt = sub("train-dasp").join("dasp.ckpt");
    dasp(&sub("train-reuse"), &["train", "--data", data_s, "--dasp", dasp_ckpt.to_str().unwrap()]);
    let agent = sub("train").join("agent.ckpt");
    let agent_s = agent.to_str().unwrap();
    dasp(&sub("eval"), &["eval", "--checkpoint", agent_s, "--episodes", "3", "--push", "moderate", "--data", data_s]);
    dasp(&sub("validity"), &["validity", "--data", data_s, "--seeds", "1,2", "--states", "200"]);
    dasp(&sub("validity-tdm"), &["validity", "--data", data_s, "--seeds", "3", "--states", "200", "--true-dynamics"]);
    dasp(&sub("sweep"), &["sweep-alpha", "--data", data_s, "--alphas", "0.1,100", "--episodes", "2"]);
    dasp(&sub("recovery"), &["recovery", "--data", data_s, "--seeds", "1,2", "--episodes", "2", "--window", "5"]);

    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(key, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

/// CSV files every full pass must write.
pub const EXPECTED_CSVS: [&str; 10] = [
    "train-dasp/dasp_loss.csv",
    "train/metrics.csv",
    "train/dasp_loss.csv",
    "train-reuse/metrics.csv",
    "eval/eval.csv",
    "validity/validity.csv",
    "validity-tdm/validity.csv",
    "sweep/sweep.csv",
    "recovery/recovery.csv",
    "recovery/recovery_returns.csv",
];

/// Two full passes in fresh directories; returns how many CSV files matched byte for byte,
/// or the first difference.
pub fn rerun_and_compare() -> Result<usize, String> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_all(a.path());
    let second = run_all(b.path());
    for expected in EXPECTED_CSVS {
        if !first.contains_key(expected) {
            return Err(format!("missing {expected}"));
        }
    }
    if first.keys().ne(second.keys()) {
        return Err("the two runs wrote different file sets".into());
    }
    for (name, bytes) in &first {
        if bytes != &second[name] {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(first.keys().filter(|k| k.ends_with(".csv")).count())
}
