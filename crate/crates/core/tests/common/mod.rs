#![allow(dead_code)]

use flowclass_core::dataset::{Dataset, FeatureSchema, Samples};
use flowclass_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian blobs: class `c` is centred at `spacing * e_{c mod d}` scaled by `(1 + c / d)`,
/// unit variance per coordinate, so distinct class means are at least `spacing` apart.
pub fn blobs(
    n_per_class: usize,
    n_classes: usize,
    d: usize,
    spacing: f64,
    seed: u64,
) -> (Matrix, Vec<usize>) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for c in 0..n_classes {
        let mut mean = vec![0.0; d];
        mean[c % d] = spacing * (1.0 + (c / d) as f64);
        for _ in 0..n_per_class {
            rows.push(
                mean.iter()
                    .map(|m| m + normal.sample(&mut r))
                    .collect::<Vec<f64>>(),
            );
            y.push(c);
        }
    }
    // interleave deterministically so classes are not contiguous
    let mut idx: Vec<usize> = (0..y.len()).collect();
    for i in (1..idx.len()).rev() {
        let j = r.random_range(0..=i);
        idx.swap(i, j);
    }
    let x = Matrix::from_rows(&idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>()).unwrap();
    (x, idx.iter().map(|&i| y[i]).collect())
}

pub fn blob_samples(
    n_per_class: usize,
    n_classes: usize,
    d: usize,
    spacing: f64,
    seed: u64,
) -> Samples {
    let (x, y) = blobs(n_per_class, n_classes, d, spacing, seed);
    Samples::new(x, y, n_classes).unwrap()
}

pub fn class_name(c: usize) -> String {
    [
        "BULK",
        "CHAT",
        "DATABASE",
        "INTERACTIVE",
        "MAIL",
        "P2P",
        "WWW",
    ][c % 7]
        .to_string()
}

/// 12-feature blob dataset with Moore column names and string labels.
pub fn blob_dataset(n_per_class: usize, n_classes: usize, spacing: f64, seed: u64) -> Dataset {
    let (x, y) = blobs(n_per_class, n_classes, 12, spacing, seed);
    Dataset::new(
        FeatureSchema::moore(),
        x,
        y.iter().map(|&c| class_name(c)).collect(),
    )
    .unwrap()
}

/// Labels depend only on the listed features; every other column is uniform noise.
pub fn informative(n: usize, d: usize, informative: &[usize], seed: u64) -> Samples {
    let mut r = rng(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
        let score: f64 = informative
            .iter()
            .map(|&j| if row[j] > 0.5 { 1.0 } else { 0.0 })
            .sum();
        y.push(score as usize);
        rows.push(row);
    }
    Samples::new(Matrix::from_rows(&rows).unwrap(), y, informative.len() + 1).unwrap()
}
