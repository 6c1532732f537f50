#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

/// Run the `dpn` binary with `dir` as the working directory.
pub fn dpn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpn"))
        .current_dir(dir)
        .env_remove("DPN_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn dpn")
}

/// Run and require success.
pub fn dpn_ok(dir: &Path, args: &[&str]) -> Output {
    let out = dpn(dir, args);
    assert!(
        out.status.success(),
        "dpn {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn exit_code(dir: &Path, args: &[&str]) -> i32 {
    dpn(dir, args).status.code().expect("exit code")
}

/// Parse a CSV with a header into rows of strings.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}
