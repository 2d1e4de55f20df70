#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_dynoclust");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// `(stream file, truth file, gen arguments)` for every shipped stream.
pub const FIXTURE_STREAMS: [(&str, &str, &[&str]); 2] = [
    ("gaussians.jsonl", "gaussians_truth.jsonl", &["--kind", "gaussians", "--steps", "10", "--seed", "7"]),
    ("rings.jsonl", "rings_truth.jsonl", &["--kind", "rings", "--steps", "4", "--seed", "0", "--noise-sd", "0.01"]),
];

pub fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(BIN).args(args).env_remove("DYNOCLUST_SEED").output().expect("spawn dynoclust")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// The `all` row of an `eval` report.
pub fn overall(report: &str) -> f64 {
    let last = report.lines().last().expect("non-empty report");
    let fields: Vec<&str> = last.split(',').collect();
    assert_eq!(fields[0], "all", "{report}");
    fields[2].parse().expect("accuracy")
}
