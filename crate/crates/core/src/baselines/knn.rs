//! Brute-force k-nearest-neighbour classifier on Euclidean distance.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

pub fn knn_fit(data: &Samples, k: usize) -> Result<KnnModel> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if data.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: data.len(),
        });
    }
    Ok(KnnModel {
        k,
        x: data.x.clone(),
        y: data.y.clone(),
        n_classes: data.n_classes,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Majority label among the `k` nearest rows. Distance ties go to the lower row
/// index; vote ties to the smaller summed distance, then the lower class.
pub fn knn_predict(model: &KnnModel, query: &[f64]) -> Result<usize> {
    if query.len() != model.x.cols() {
        return Err(Error::Schema(format!(
            "query has {} features, model stores {}",
            query.len(),
            model.x.cols()
        )));
    }
    let mut dist: Vec<(f64, usize)> = model
        .x
        .iter_rows()
        .enumerate()
        .map(|(i, row)| (euclidean(row, query), i))
        .collect();
    let k = model.k;
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, by_distance_then_index);
        dist.truncate(k);
    }
    dist.sort_unstable_by(by_distance_then_index);

    let mut votes = vec![0usize; model.n_classes];
    let mut spread = vec![0.0f64; model.n_classes];
    for &(d, i) in &dist {
        let c = model.y[i];
        votes[c] += 1;
        spread[c] += d;
    }
    let mut best = model.y[dist[0].1];
    for c in 0..model.n_classes {
        if votes[c] == 0 {
            continue;
        }
        let better = votes[c] > votes[best]
            || (votes[c] == votes[best]
                && (spread[c] < spread[best] || (spread[c] == spread[best] && c < best)));
        if better {
            best = c;
        }
    }
    Ok(best)
}

pub fn knn_predict_batch(model: &KnnModel, x: &Matrix) -> Result<Vec<usize>> {
    (0..x.rows())
        .into_par_iter()
        .map(|i| knn_predict(model, x.row(i)))
        .collect()
}
