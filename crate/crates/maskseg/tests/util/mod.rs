//! Helpers shared between integration test targets.

#![allow(dead_code)]

pub mod grad;
pub mod http;

use std::path::Path;
use std::process::Output;

/// Run the CLI binary with the given arguments in `dir`.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_maskseg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn maskseg binary")
}

pub fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

pub fn assert_cli_ok(out: &Output) {
    assert_eq!(
        exit_code(out),
        0,
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}
