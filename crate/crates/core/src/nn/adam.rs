//! Bias-corrected adaptive-moment optimizer.

use crate::error::{check_len, Error, Result};
use crate::nn::params::{Gradients, Parameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.data.len()]).collect();
        Self { config, first: zeros.clone(), second: zeros, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one descent step. Nothing is modified when any gradient is non-finite.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &Gradients) -> Result<()> {
        let names: Vec<String> = params.blocks().into_iter().map(|b| b.name).collect();
        check_len("adam gradient blocks", self.first.len(), grads.blocks().len())?;
        for (name, (g, m)) in names.iter().zip(grads.blocks().iter().zip(&self.first)) {
            check_len("adam gradient block", m.len(), g.len())?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericFault(format!("gradient of {name}")));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let blocks = params.blocks_mut();
        check_len("adam parameter blocks", self.first.len(), blocks.len())?;
        for (((p, g), m), v) in blocks.into_iter().zip(grads.blocks()).zip(&mut self.first).zip(&mut self.second) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
