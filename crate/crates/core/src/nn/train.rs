//! Mini-batch training loop and inference.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{backward, forward, init_network, Mode, NetworkSpec, Parameters};
use super::ops::cross_entropy;
use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Overrides the spec's dropout rate for this run.
    pub dropout_rate: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 500,
            batch_size: 1000,
            learning_rate: 0.01,
            dropout_rate: 0.2,
            k_folds: 10,
            seed: 0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    /// `epoch,loss,accuracy` rows, epochs numbered from 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "loss", "accuracy"])?;
        for (e, (l, a)) in self.loss.iter().zip(&self.accuracy).enumerate() {
            w.write_record([(e + 1).to_string(), l.to_string(), a.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("history", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub spec: NetworkSpec,
    pub params: Parameters,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Splits `order` into mini-batches. With batch norm a trailing single-row
/// batch is merged into the one before it.
fn batches(order: &[usize], batch_size: usize, batch_norm: bool) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batch_norm && out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = (out.len() - 1) * batch_size;
        *out.last_mut().expect("len > 1") = &order[start..];
    }
    out
}

pub fn train(
    data: &Samples,
    spec: &NetworkSpec,
    config: &TrainingConfig,
) -> Result<(NetworkModel, TrainingHistory)> {
    config.validate()?;
    let spec = NetworkSpec {
        dropout_rate: config.dropout_rate,
        ..spec.clone()
    };
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    if data.dim() != spec.input_dim {
        return Err(Error::Schema(format!(
            "training data has {} features, network expects {}",
            data.dim(),
            spec.input_dim
        )));
    }
    if data.n_classes > spec.n_classes || data.y.iter().any(|&c| c >= spec.n_classes) {
        return Err(Error::Contract(format!(
            "labels exceed the network's {} output classes",
            spec.n_classes
        )));
    }
    if spec.batch_norm && config.batch_size < 2 {
        return Err(Error::Config(
            "batch normalization needs a batch size of at least 2".into(),
        ));
    }

    let mut params = init_network(&spec, config.seed)?;
    let mut adam = AdamState::for_parameters(config.adam(), &params);
    let mut shuffle_rng = rng::stream(config.seed, rng::SHUFFLE);
    let mut dropout_rng = rng::stream(config.seed, rng::DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in batches(&order, config.batch_size, spec.batch_norm)
            .into_iter()
            .enumerate()
        {
            let x = data.x.select_rows(idx);
            let mut targets = Matrix::zeros(idx.len(), spec.n_classes);
            for (r, &i) in idx.iter().enumerate() {
                targets.set(r, data.y[i], 1.0);
            }
            let pass = forward(&params, &spec, &x, Mode::Train(&mut dropout_rng))?;
            let loss = cross_entropy(&pass.probs, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    batch: b + 1,
                });
            }
            loss_sum += loss * idx.len() as f64;
            correct += idx
                .iter()
                .enumerate()
                .filter(|(r, &i)| argmax(pass.probs.row(*r)) == data.y[i])
                .count();
            let trace = pass.trace.expect("train mode keeps a trace");
            let grads = backward(&params, &spec, &trace, &pass.probs, &targets)?;
            for (bn, stats) in params.norms.iter_mut().zip(trace.batch_stats()) {
                if let (Some(bn), Some(stats)) = (bn, stats) {
                    bn.update_running(stats);
                }
            }
            adam_step(&mut params, &grads, &mut adam)?;
        }
        history.loss.push(loss_sum / data.len() as f64);
        history.accuracy.push(correct as f64 / data.len() as f64);
    }
    Ok((NetworkModel { spec, params }, history))
}

/// Eval-mode forward pass; class is the argmax, ties to the lower index.
pub fn predict(model: &NetworkModel, x: &Matrix) -> Result<(Vec<usize>, Matrix)> {
    if x.cols() != model.spec.input_dim {
        return Err(Error::Schema(format!(
            "input has {} features, network expects {}",
            x.cols(),
            model.spec.input_dim
        )));
    }
    let probs = forward(&model.params, &model.spec, x, Mode::Eval)?.probs;
    let classes = probs.iter_rows().map(argmax).collect();
    Ok((classes, probs))
}
