use serde::{Deserialize, Serialize};

use super::network::{Gradients, Parameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|len| (vec![0.0; len], vec![0.0; len]))
            .unzip();
        Self { config, t: 0, m, v }
    }

    pub fn for_parameters(config: AdamConfig, params: &Parameters) -> Self {
        Self::new(config, params.tensors().iter().map(|t| t.len()))
    }

    /// One bias-corrected update over matching tensor lists.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Contract("adam tensor shape mismatch".into()));
            }
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        self.t += 1;
        let c1 = 1.0 - b1.powf(self.t as f64);
        let c2 = 1.0 - b2.powf(self.t as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn adam_step(params: &mut Parameters, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let grads = grads.tensors();
    let mut tensors = params.tensors_mut();
    state.step(&mut tensors, &grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(AdamConfig::default(), [3]);
        let mut p = vec![0.5, -1.0, 2.0];
        s.step(&mut [&mut p[..]], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = AdamState::new(AdamConfig::default(), [1]);
        let mut p = [0.0];
        s.step(&mut [&mut p[..]], &[&[1.0]]).unwrap();
        let expect = -0.01 / (1.0 + 1e-8);
        assert!((p[0] - expect).abs() < 1e-18, "{}", p[0]);
    }

    #[test]
    fn step_size_bounded_for_any_gradient_scale() {
        for scale in [1e-6, 1.0, 1e6] {
            let mut s = AdamState::new(AdamConfig::default(), [1]);
            let mut p = [0.0];
            let mut prev = 0.0;
            for _ in 0..50 {
                s.step(&mut [&mut p[..]], &[&[scale]]).unwrap();
                assert!((p[0] - prev).abs() <= 0.01 * (1.0 + 1e-9));
                prev = p[0];
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(AdamConfig::default(), [2]);
        let mut p = [0.0; 3];
        assert!(s.step(&mut [&mut p[..]], &[&[0.0; 3]]).is_err());
        assert!(s.step(&mut [], &[]).is_err());
    }
}
