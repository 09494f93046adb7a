//! Linear one-vs-rest SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::ops::dot;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Rows per subgradient step; 1 is plain SGD, `>= N` is full-batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// `n_classes x d`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub params: SvmParams,
    /// Primal objective of each class's binary problem after every epoch.
    pub objective_history: Vec<Vec<f64>>,
}

/// `lambda/2 |w|^2 + mean(max(0, 1 - y (w.x + b)))` for the binary problem of `class`.
pub fn objective(data: &Samples, class: usize, w: &[f64], b: f64, lambda: f64) -> f64 {
    let hinge: f64 = data
        .x
        .iter_rows()
        .zip(&data.y)
        .map(|(x, &c)| {
            let y = if c == class { 1.0 } else { -1.0 };
            (1.0 - y * (dot(w, x) + b)).max(0.0)
        })
        .sum();
    0.5 * lambda * dot(w, w) + hinge / data.len() as f64
}

/// Rows sorted by feature bit patterns then label, so the fit does not depend on input order.
fn canonical_order(data: &Samples) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| {
        let ra = data.x.row(a).iter().map(|v| v.to_bits());
        let rb = data.x.row(b).iter().map(|v| v.to_bits());
        ra.cmp(rb).then(data.y[a].cmp(&data.y[b]))
    });
    idx
}

fn fit_binary(
    data: &Samples,
    order: &[usize],
    class: usize,
    p: &SvmParams,
) -> (Vec<f64>, f64, Vec<f64>) {
    let d = data.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut order = order.to_vec();
    let mut rng = rng::stream(p.seed, rng::SVM + class as u64);
    let mut t = 0u64;
    let mut history = Vec::with_capacity(p.epochs);
    let mut gw = vec![0.0; d];
    for _ in 0..p.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(p.batch_size) {
            let step = p.learning_rate / (1.0 + p.learning_rate * p.lambda * t as f64);
            gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = p.lambda * wi);
            let mut gb = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let x = data.x.row(i);
                let y = if data.y[i] == class { 1.0 } else { -1.0 };
                if y * (dot(&w, x) + b) < 1.0 {
                    gw.iter_mut()
                        .zip(x)
                        .for_each(|(g, xi)| *g -= scale * y * xi);
                    gb -= scale * y;
                }
            }
            w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
            b -= step * gb;
            t += 1;
        }
        history.push(objective(data, class, &w, b, p.lambda));
    }
    (w, b, history)
}

pub fn svm_fit(data: &Samples, params: &SvmParams) -> Result<SvmModel> {
    if params.epochs == 0 || params.batch_size == 0 {
        return Err(Error::Config(
            "svm epochs and batch size must be at least 1".into(),
        ));
    }
    if !(params.learning_rate > 0.0 && params.lambda >= 0.0) {
        return Err(Error::Config(
            "svm learning rate must be positive and lambda non-negative".into(),
        ));
    }
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    let present = data.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::DegenerateLabels(
            "one-vs-rest SVM needs at least two classes present".into(),
        ));
    }
    let order = canonical_order(data);
    let fitted: Vec<_> = (0..data.n_classes)
        .into_par_iter()
        .map(|c| fit_binary(data, &order, c, params))
        .collect();
    let mut weights = Matrix::zeros(data.n_classes, data.dim());
    let mut bias = Vec::with_capacity(data.n_classes);
    let mut objective_history = Vec::with_capacity(data.n_classes);
    for (c, (w, b, h)) in fitted.into_iter().enumerate() {
        weights.row_mut(c).copy_from_slice(&w);
        bias.push(b);
        objective_history.push(h);
    }
    Ok(SvmModel {
        weights,
        bias,
        params: params.clone(),
        objective_history,
    })
}

pub fn decision_values(model: &SvmModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.weights.cols() {
        return Err(Error::Schema(format!(
            "query has {} features, model expects {}",
            x.len(),
            model.weights.cols()
        )));
    }
    Ok(model
        .weights
        .iter_rows()
        .zip(&model.bias)
        .map(|(w, b)| dot(w, x) + b)
        .collect())
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = j;
        }
    }
    best
}

pub fn svm_predict(model: &SvmModel, x: &[f64]) -> Result<usize> {
    Ok(argmax_first(&decision_values(model, x)?))
}

pub fn svm_predict_batch(model: &SvmModel, x: &Matrix) -> Result<Vec<usize>> {
    x.iter_rows().map(|r| svm_predict(model, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_rule() {
        assert_eq!(argmax_first(&[-1.0, 3.0, 0.0]), 1);
        assert_eq!(argmax_first(&[2.0, 2.0, 2.0]), 0);
    }

    #[test]
    fn single_class_rejected() {
        let data = Samples::new(Matrix::zeros(4, 2), vec![1; 4], 3).unwrap();
        assert!(matches!(
            svm_fit(&data, &SvmParams::default()),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn shapes_and_width_check() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let data = Samples::new(x, vec![0, 1, 2], 3).unwrap();
        let m = svm_fit(
            &data,
            &SvmParams {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!((m.weights.rows(), m.weights.cols()), (3, 2));
        assert_eq!(m.bias.len(), 3);
        assert_eq!(m.objective_history.len(), 3);
        assert!(svm_predict(&m, &[1.0]).is_err());
    }
}
