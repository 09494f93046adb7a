#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use flowclass_core::dataset::MOORE_FEATURES;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const CLASSES: [&str; 7] = [
    "BULK",
    "CHAT",
    "DATABASE",
    "INTERACTIVE",
    "MAIL",
    "P2P",
    "WWW",
];

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_flowclass"))
}

pub fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Unit-variance Gaussian blobs, class `c` centred at `spacing` on axis `c`, rows shuffled.
pub fn blob_rows(
    n_per_class: usize,
    n_classes: usize,
    spacing: f64,
    seed: u64,
) -> Vec<(Vec<f64>, usize)> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    for c in 0..n_classes {
        for _ in 0..n_per_class {
            let x: Vec<f64> = (0..12)
                .map(|j| normal.sample(&mut r) + if j == c { spacing } else { 0.0 })
                .collect();
            rows.push((x, c));
        }
    }
    for i in (1..rows.len()).rev() {
        let j = r.random_range(0..=i);
        rows.swap(i, j);
    }
    rows
}

pub fn blob_csv(
    n_per_class: usize,
    n_classes: usize,
    spacing: f64,
    seed: u64,
    with_label: bool,
) -> String {
    let mut s = MOORE_FEATURES.join(",");
    if with_label {
        s.push_str(",class");
    }
    s.push('\n');
    for (x, c) in blob_rows(n_per_class, n_classes, spacing, seed) {
        let cells: Vec<String> = x.iter().map(|v| format!("{v:.9}")).collect();
        s.push_str(&cells.join(","));
        if with_label {
            write!(s, ",{}", CLASSES[c]).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn write_blobs(path: &Path, n_per_class: usize, n_classes: usize, spacing: f64, seed: u64) {
    std::fs::write(path, blob_csv(n_per_class, n_classes, spacing, seed, true)).unwrap();
}
