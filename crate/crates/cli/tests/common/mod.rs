#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// Writes an IDX image/label pair of `n` 8x8 images per split.
/// Class k (of 4) has a bright vertical bar at column 2k plus a little noise, so
/// small models learn it quickly.
pub fn write_idx_fixture(dir: &Path, n_train: usize, n_test: usize) {
    fs::create_dir_all(dir).unwrap();
    for (prefix, n, salt) in [("train", n_train, 1u64), ("t10k", n_test, 2u64)] {
        let mut images = Vec::new();
        for v in [0x0803u32, n as u32, 8, 8] {
            images.extend_from_slice(&v.to_be_bytes());
        }
        let mut labels = Vec::new();
        for v in [0x0801u32, n as u32] {
            labels.extend_from_slice(&v.to_be_bytes());
        }
        let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for i in 0..n {
            let class = (i * 7 + salt as usize) % 4;
            labels.push(class as u8);
            for _y in 0..8 {
                for x in 0..8 {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    let noise = (state % 40) as u8;
                    let bar = if x == class * 2 { 200 } else { 0 };
                    images.push(bar + noise);
                }
            }
        }
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_randpad"))
}

pub fn randpad(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn randpad")
}

pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// Relative path -> bytes of every file under `root`.
pub fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
