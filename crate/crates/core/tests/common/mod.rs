#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const SMALL_CONFIG: &str = r#"
seed = 11

[grid]
d = 1
n = 32
dt = 5e-5
n_t = 120

[noise]
kind = "space_white"
k_max = 3

[nonlinearity]
m = 1.5
eps_reg = 0.01
sigma = "compact"
"#;

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

pub fn spmlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

pub fn summary(p: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}
