#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn rebound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rebound"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .expect("rebound binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Invocations that must exit 2, each paired with text its error must
/// contain. `{log}` is a valid native log, `{tmp}` a scratch directory.
pub const BAD_INVOCATIONS: &[(&[&str], &str)] = &[
    (&[], "Usage"),
    (&["frobnicate"], "frobnicate"),
    (
        &[
            "convert", "--from", "kitti", "--input", "{log}", "--output", "{tmp}/a",
        ],
        "--from",
    ),
    (
        &["convert", "--input", "{log}", "--output", "{tmp}/a"],
        "--from",
    ),
    (
        &[
            "convert",
            "--from",
            "nuscenes",
            "--input",
            "{tmp}/missing",
            "--output",
            "{tmp}/a",
        ],
        "--input",
    ),
    (
        &[
            "convert", "--from", "nuscenes", "--input", "{log}", "--output", "{tmp}/a", "--port",
            "1",
        ],
        "--port",
    ),
    (
        &[
            "convert",
            "--from",
            "argoverse",
            "--input",
            "{log}",
            "--output",
            "{tmp}/a",
        ],
        "{log}",
    ),
    (
        &[
            "export", "--to", "kitti", "--input", "{log}", "--output", "{tmp}/a",
        ],
        "--to",
    ),
    (
        &[
            "export",
            "--to",
            "waymo",
            "--input",
            "{tmp}/missing",
            "--output",
            "{tmp}/a",
        ],
        "missing",
    ),
    (
        &[
            "export", "--to", "waymo", "--input", "{log}", "--output", "{log}",
        ],
        "--output",
    ),
    (&["validate"], "LOG"),
    (&["validate", "{tmp}/missing"], "missing"),
    (&["validate", "{log}", "--input", "{log}"], "--input"),
    (&["diff", "{log}"], "RIGHT"),
    (&["diff", "{log}", "{tmp}/missing"], "missing"),
    (
        &[
            "filter",
            "--input",
            "{log}",
            "--output",
            "{tmp}/a",
            "--min-confidence",
            "1.5",
        ],
        "--min-confidence",
    ),
    (
        &[
            "filter",
            "--input",
            "{log}",
            "--output",
            "{tmp}/a",
            "--min-confidence",
            "high",
        ],
        "--min-confidence",
    ),
    (
        &[
            "filter",
            "--input",
            "{log}",
            "--output",
            "{tmp}/a",
            "--max-range",
            "-5",
        ],
        "--max-range",
    ),
    (
        &[
            "filter",
            "--input",
            "{log}",
            "--output",
            "{tmp}/a",
            "--prediction-set",
            "nope",
        ],
        "--prediction-set",
    ),
    (
        &["filter", "--input", "{log}", "--output", "{log}"],
        "--output",
    ),
    (&["stats", "{log}", "--max-range", "NaN"], "--max-range"),
    (&["stats", "{tmp}/missing"], "missing"),
    (&["serve", "--input", "{log}", "--port", "70000"], "--port"),
    (&["serve", "--input", "{tmp}/missing"], "--input"),
];

pub fn expand(args: &[&str], log: &Path, tmp: &Path) -> Vec<String> {
    args.iter()
        .map(|a| a.replace("{log}", s(log)).replace("{tmp}", s(tmp)))
        .collect()
}
