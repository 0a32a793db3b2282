use serde::{Deserialize, Serialize};

use super::{NetworkGrads, NetworkParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Bias-corrected ADAM moments, congruent with a network's trainable
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: NetworkGrads,
    second: NetworkGrads,
}

impl AdamState {
    pub fn new(params: &NetworkParams, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: NetworkGrads::zeros_like(params),
            second: NetworkGrads::zeros_like(params),
        }
    }

    /// One ADAM update. Non-finite gradients leave parameters and state
    /// untouched and surface as a divergence error.
    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkGrads) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Divergence { iteration: self.step as usize, reason: "non-finite gradient".into() });
        }
        let expected: Vec<usize> = self.first.slices().iter().map(|s| s.len()).collect();
        let got: Vec<usize> = grads.slices().iter().map(|s| s.len()).collect();
        if expected != got {
            return Err(Error::invalid("gradient shapes do not match optimizer state"));
        }
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let params_flat = params.trainable_mut();
        if params_flat.len() != expected.len() {
            return Err(Error::invalid("parameter shapes do not match optimizer state"));
        }
        for (((p, g), m), v) in params_flat
            .into_iter()
            .zip(grads.slices())
            .zip(self.first.slices_mut())
            .zip(self.second.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
