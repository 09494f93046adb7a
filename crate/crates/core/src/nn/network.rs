//! Feedforward network topology, parameter storage, forward pass and backpropagation.
//!
//! Layer plan for `h` hidden layers:
//!
//! ```text
//! affine -> [batch norm] -> ReLU                       hidden 1
//! affine -> [batch norm] -> sigmoid -> [dropout]       hidden 2..h (dropout after every 2nd)
//! affine -> softmax                                    output
//! ```

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::{self, BatchNorm, BatchNormCache, Phase};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub batch_norm: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            input_dim: 12,
            hidden_layers: vec![16; 7],
            n_classes: 7,
            dropout_rate: 0.2,
            batch_norm: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_classes == 0 || self.hidden_layers.contains(&0) {
            return Err(Error::Config("every layer width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Activation after hidden layer `l` (0-based).
    pub fn activation(&self, l: usize) -> Activation {
        if l == 0 {
            Activation::Relu
        } else {
            Activation::Sigmoid
        }
    }

    /// Dropout follows every second hidden layer (2nd, 4th, ...).
    pub fn dropout_after(&self, l: usize) -> bool {
        self.dropout_rate > 0.0 && (l + 1).is_multiple_of(2)
    }

    /// `(in, out)` width of every affine layer, hidden layers first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden_layers.len() + 2);
        widths.push(self.input_dim);
        widths.extend(&self.hidden_layers);
        widths.push(self.n_classes);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out x in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Hidden layers followed by the output layer.
    pub dense: Vec<Dense>,
    /// One entry per hidden layer; `None` when batch norm is disabled.
    pub norms: Vec<Option<BatchNorm>>,
}

impl Parameters {
    /// Trainable tensors in canonical order: each dense layer's weights and bias,
    /// then each batch norm's scale and shift.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for d in &mut self.dense {
            out.push(d.weights.as_mut_slice());
            out.push(&mut d.bias);
        }
        for bn in self.norms.iter_mut().flatten() {
            out.push(&mut bn.gamma);
            out.push(&mut bn.beta);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for d in &self.dense {
            out.push(d.weights.as_slice());
            out.push(&d.bias);
        }
        for bn in self.norms.iter().flatten() {
            out.push(&bn.gamma);
            out.push(&bn.beta);
        }
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that the stored tensors chain according to `spec`.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.layer_shapes();
        let bad = |msg: String| Err(Error::Contract(msg));
        if self.dense.len() != shapes.len() || self.norms.len() != spec.hidden_layers.len() {
            return bad(format!(
                "parameters hold {} layers, spec needs {}",
                self.dense.len(),
                shapes.len()
            ));
        }
        for (l, (d, &(fan_in, fan_out))) in self.dense.iter().zip(&shapes).enumerate() {
            if d.weights.rows() != fan_out || d.weights.cols() != fan_in || d.bias.len() != fan_out
            {
                return bad(format!("layer {l} has the wrong shape"));
            }
        }
        for (l, bn) in self.norms.iter().enumerate() {
            match bn {
                Some(bn) if !spec.batch_norm || bn.width() != spec.hidden_layers[l] => {
                    return bad(format!("batch norm {l} does not match spec"))
                }
                Some(bn)
                    if bn.beta.len() != bn.width()
                        || bn.running_mean.len() != bn.width()
                        || bn.running_var.len() != bn.width()
                        || bn.running_var.iter().any(|&v| v < 0.0) =>
                {
                    return bad(format!("batch norm {l} is malformed"))
                }
                None if spec.batch_norm => return bad(format!("batch norm {l} missing")),
                _ => {}
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, identity batch norms.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Parameters> {
    spec.validate()?;
    let mut rng = rng::stream(seed, rng::INIT);
    let dense = spec
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.random::<f64>() - 1.0) * limit)
                .collect();
            Dense {
                weights: Matrix::from_vec(fan_out, fan_in, data).expect("shape by construction"),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    let norms = spec
        .hidden_layers
        .iter()
        .map(|&w| spec.batch_norm.then(|| BatchNorm::new(w)))
        .collect();
    Ok(Parameters { dense, norms })
}

#[derive(Debug, Clone)]
struct HiddenTrace {
    input: Matrix,
    norm: Option<BatchNormCache>,
    activated: Matrix,
    mask: Option<Vec<f64>>,
}

/// Intermediate values retained by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    hidden: Vec<HiddenTrace>,
    output_input: Matrix,
    rows: usize,
}

impl Trace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Batch statistics of each hidden batch norm, for the running averages.
    pub fn batch_stats(&self) -> impl Iterator<Item = Option<&ops::BatchStats>> {
        self.hidden
            .iter()
            .map(|h| h.norm.as_ref().map(|c| &c.stats))
    }
}

pub enum Mode<'a> {
    /// Batch statistics, active dropout drawing from the given stream, trace retained.
    Train(&'a mut Rng),
    Eval,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Matrix,
    pub trace: Option<Trace>,
}

pub fn forward(
    params: &Parameters,
    spec: &NetworkSpec,
    x: &Matrix,
    mode: Mode<'_>,
) -> Result<Forward> {
    if x.cols() != spec.input_dim {
        return Err(Error::Contract(format!(
            "batch width {}, network input {}",
            x.cols(),
            spec.input_dim
        )));
    }
    params.check_against(spec)?;
    let (phase, mut rng) = match mode {
        Mode::Train(r) => (Phase::Train, Some(r)),
        Mode::Eval => (Phase::Eval, None),
    };
    let train = phase == Phase::Train;

    let mut hidden = Vec::new();
    let mut a = x.clone();
    let n_hidden = spec.hidden_layers.len();
    for l in 0..n_hidden {
        let layer = &params.dense[l];
        let mut z = ops::affine(&a, &layer.weights, &layer.bias)?;
        let mut norm = None;
        if let Some(bn) = &params.norms[l] {
            let (y, cache) = ops::batchnorm_forward(&z, bn, phase)?;
            z = y;
            norm = cache;
        }
        match spec.activation(l) {
            Activation::Relu => z.map_inplace(|v| v.max(0.0)),
            Activation::Sigmoid => z.map_inplace(ops::sigmoid),
        }
        let mut mask = None;
        let mut next = z.clone();
        if spec.dropout_after(l) {
            if let Some(r) = rng.as_deref_mut() {
                let (y, m) = ops::dropout_forward(&z, spec.dropout_rate, phase, r)?;
                next = y;
                mask = m;
            }
        }
        if train {
            hidden.push(HiddenTrace {
                input: a,
                norm,
                activated: z,
                mask,
            });
        }
        a = next;
    }

    let out = &params.dense[n_hidden];
    let mut probs = ops::affine(&a, &out.weights, &out.bias)?;
    for i in 0..probs.rows() {
        ops::softmax_inplace(probs.row_mut(i));
    }
    let trace = train.then(|| Trace {
        hidden,
        output_input: a,
        rows: x.rows(),
    });
    Ok(Forward { probs, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradients mirroring [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<Dense>,
    pub norms: Vec<Option<NormGrad>>,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for d in &self.dense {
            out.push(d.weights.as_slice());
            out.push(&d.bias);
        }
        for g in self.norms.iter().flatten() {
            out.push(&g.gamma);
            out.push(&g.beta);
        }
        out
    }
}

/// Gradients `(dW, db, dx)` of an affine layer given the upstream delta.
fn affine_backward(input: &Matrix, layer: &Dense, delta: &Matrix) -> (Dense, Matrix) {
    let (n, fan_in, fan_out) = (input.rows(), input.cols(), layer.weights.rows());
    let mut dw = Matrix::zeros(fan_out, fan_in);
    let mut db = vec![0.0; fan_out];
    let mut dx = Matrix::zeros(n, fan_in);
    for i in 0..n {
        let xi = input.row(i);
        let di = delta.row(i);
        for o in 0..fan_out {
            let d = di[o];
            db[o] += d;
            let wrow = layer.weights.row(o);
            for (gw, &xv) in dw.row_mut(o).iter_mut().zip(xi) {
                *gw += d * xv;
            }
            for (g, &w) in dx.row_mut(i).iter_mut().zip(wrow) {
                *g += d * w;
            }
        }
    }
    (
        Dense {
            weights: dw,
            bias: db,
        },
        dx,
    )
}

/// Gradients of the mean cross-entropy over the traced batch.
pub fn backward(
    params: &Parameters,
    spec: &NetworkSpec,
    trace: &Trace,
    probs: &Matrix,
    targets: &Matrix,
) -> Result<Gradients> {
    params.check_against(spec)?;
    let n = trace.rows;
    if probs.rows() != n || targets.rows() != n || trace.hidden.len() != spec.hidden_layers.len() {
        return Err(Error::Contract(format!(
            "trace covers {n} rows, got {} probability rows and {} targets",
            probs.rows(),
            targets.rows()
        )));
    }
    if probs.cols() != spec.n_classes || targets.cols() != spec.n_classes {
        return Err(Error::Contract(
            "output width does not match class count".into(),
        ));
    }
    let nf = n as f64;
    // fused softmax + cross-entropy
    let mut delta = probs.clone();
    for (d, t) in delta.as_mut_slice().iter_mut().zip(targets.as_slice()) {
        *d = (*d - t) / nf;
    }

    let n_hidden = spec.hidden_layers.len();
    let mut dense_grads = Vec::with_capacity(n_hidden + 1);
    let mut norm_grads = vec![None; n_hidden];
    let (g, mut da) = affine_backward(&trace.output_input, &params.dense[n_hidden], &delta);
    dense_grads.push(g);

    for l in (0..n_hidden).rev() {
        let h = &trace.hidden[l];
        if let Some(mask) = &h.mask {
            for (g, m) in da.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        // through the activation
        let mut dz = da;
        match spec.activation(l) {
            Activation::Relu => {
                for (g, &a) in dz.as_mut_slice().iter_mut().zip(h.activated.as_slice()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Sigmoid => {
                for (g, &s) in dz.as_mut_slice().iter_mut().zip(h.activated.as_slice()) {
                    *g *= s * (1.0 - s);
                }
            }
        }
        if let Some(bn) = &params.norms[l] {
            let cache = h.norm.as_ref().ok_or_else(|| {
                Error::Contract("trace lacks batch-norm cache; was it an eval-mode pass?".into())
            })?;
            let (dz_pre, grad) = batchnorm_backward(bn, cache, &dz);
            norm_grads[l] = Some(grad);
            dz = dz_pre;
        }
        let (g, d_in) = affine_backward(&h.input, &params.dense[l], &dz);
        dense_grads.push(g);
        da = d_in;
    }
    dense_grads.reverse();
    Ok(Gradients {
        dense: dense_grads,
        norms: norm_grads,
    })
}

fn batchnorm_backward(bn: &BatchNorm, cache: &BatchNormCache, dy: &Matrix) -> (Matrix, NormGrad) {
    let (n, width) = (dy.rows(), dy.cols());
    let nf = n as f64;
    let mut gamma = vec![0.0; width];
    let mut beta = vec![0.0; width];
    for i in 0..n {
        for j in 0..width {
            let g = dy.get(i, j);
            gamma[j] += g * cache.x_hat.get(i, j);
            beta[j] += g;
        }
    }
    // dx = inv_std/n * (n*dx_hat - sum(dx_hat) - x_hat*sum(dx_hat*x_hat)), dx_hat = dy*gamma
    let mut dx = Matrix::zeros(n, width);
    for j in 0..width {
        let sum_dxh = beta[j] * bn.gamma[j];
        let sum_dxh_xh = gamma[j] * bn.gamma[j];
        let k = cache.inv_std[j] / nf;
        for i in 0..n {
            let dxh = dy.get(i, j) * bn.gamma[j];
            dx.set(
                i,
                j,
                k * (nf * dxh - sum_dxh - cache.x_hat.get(i, j) * sum_dxh_xh),
            );
        }
    }
    (dx, NormGrad { gamma, beta })
}
