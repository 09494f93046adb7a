//! Layer primitives: affine map, activations, softmax, losses, dropout and batch normalization.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;

/// Probability floor inside the logarithm of the cross-entropy.
pub const PROB_CLIP: f64 = 1e-12;

/// `y_net = x W^T + b` for every row of `x`. `w` is `out x in`.
pub fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if x.cols() != w.cols() || b.len() != w.rows() {
        return Err(Error::Contract(format!(
            "affine shapes: input width {}, weights {}x{}, bias {}",
            x.cols(),
            w.rows(),
            w.cols(),
            b.len()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), w.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (o, slot) in oi.iter_mut().enumerate() {
            *slot = b[o] + dot(w.row(o), xi);
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn relu(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| v.max(0.0)).collect()
}

/// Logistic function, evaluated without overflow for large |z|.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(u: &[f64]) -> Vec<f64> {
    let mut out = u.to_vec();
    softmax_inplace(&mut out);
    out
}

pub(crate) fn softmax_inplace(u: &mut [f64]) {
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in u.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in u.iter_mut() {
        *v /= sum;
    }
}

/// Mean over rows of `-sum_j t_j ln(max(p_j, PROB_CLIP))`.
pub fn cross_entropy(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.rows() != targets.rows() || probs.cols() != targets.cols() {
        return Err(Error::Contract(format!(
            "cross-entropy shapes: probs {}x{}, targets {}x{}",
            probs.rows(),
            probs.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::EmptyInput("cross-entropy of an empty batch".into()));
    }
    let total: f64 = probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .filter(|(_, &t)| t != 0.0)
        // NaN must survive the clip so divergence is visible
        .map(|(&p, &t)| -t * if p.is_nan() { p } else { p.max(PROB_CLIP).ln() })
        .sum();
    Ok(total / probs.rows() as f64)
}

/// Half the summed squared error. Kept for reference; training uses cross-entropy.
pub fn mse_loss(y_net: &[f64], y_out: &[f64]) -> Result<f64> {
    if y_net.len() != y_out.len() {
        return Err(Error::Contract(format!(
            "mse shapes: {} vs {}",
            y_net.len(),
            y_out.len()
        )));
    }
    Ok(0.5
        * y_net
            .iter()
            .zip(y_out)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Inverted dropout. In training each unit is zeroed with probability `rate` and
/// survivors are scaled by `1/(1-rate)`; the returned mask holds those factors.
pub fn dropout_forward(
    x: &Matrix,
    rate: f64,
    phase: Phase,
    rng: &mut Rng,
) -> Result<(Matrix, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    if phase == Phase::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.as_slice().len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, Some(mask)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.9;
    pub const EPS: f64 = 1e-5;

    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Folds one batch's statistics into the running estimates.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for j in 0..self.width() {
            self.running_mean[j] = m * self.running_mean[j] + (1.0 - m) * stats.mean[j];
            self.running_var[j] = m * self.running_var[j] + (1.0 - m) * stats.var[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (divide-by-n) batch variance.
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Matrix,
    pub inv_std: Vec<f64>,
    pub stats: BatchStats,
}

/// Training mode standardizes with the batch statistics and returns them in the
/// cache (the caller decides when to fold them into the running estimates);
/// evaluation mode uses the running statistics only.
pub fn batchnorm_forward(
    x: &Matrix,
    bn: &BatchNorm,
    phase: Phase,
) -> Result<(Matrix, Option<BatchNormCache>)> {
    let width = bn.width();
    if x.cols() != width {
        return Err(Error::Contract(format!(
            "batch norm width {width}, input width {}",
            x.cols()
        )));
    }
    let n = x.rows();
    let mut out = Matrix::zeros(n, width);
    match phase {
        Phase::Eval => {
            for i in 0..n {
                for j in 0..width {
                    let x_hat =
                        (x.get(i, j) - bn.running_mean[j]) / (bn.running_var[j] + bn.eps).sqrt();
                    out.set(i, j, bn.gamma[j] * x_hat + bn.beta[j]);
                }
            }
            Ok((out, None))
        }
        Phase::Train => {
            if n < 2 {
                return Err(Error::DegenerateBatch(n));
            }
            let nf = n as f64;
            let mut mean = vec![0.0; width];
            for row in x.iter_rows() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nf);
            let mut var = vec![0.0; width];
            for row in x.iter_rows() {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= nf);
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
            let mut x_hat = Matrix::zeros(n, width);
            for i in 0..n {
                for j in 0..width {
                    let h = (x.get(i, j) - mean[j]) * inv_std[j];
                    x_hat.set(i, j, h);
                    out.set(i, j, bn.gamma[j] * h + bn.beta[j]);
                }
            }
            Ok((
                out,
                Some(BatchNormCache {
                    x_hat,
                    inv_std,
                    stats: BatchStats { mean, var },
                }),
            ))
        }
    }
}
