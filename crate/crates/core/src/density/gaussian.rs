//! Diagonal Gaussians and their closed-form KL divergence.

use std::f64::consts::PI;

use crate::error::{check_len, Error, Result};
use crate::nn::SeededRng;

/// Log-std heads are clamped to this range before exponentiation.
pub const LOG_STD_MIN: f64 = -9.210_340_371_976_184; // ln(1e-4)
pub const LOG_STD_MAX: f64 = 9.210_340_371_976_184; // ln(1e4)

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        check_len("gaussian std", mean.len(), std.len())?;
        if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Domain(format!("standard deviation must be positive, got {s}")));
        }
        Ok(Self { mean, std })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Splits a `[mean, log_std]` head, clamping the log-std.
    pub fn from_head(head: &[f64]) -> Self {
        let k = head.len() / 2;
        let mean = head[..k].to_vec();
        let std = head[k..].iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX).exp()).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(x)
            .map(|((m, s), x)| {
                let u = (x - m) / s;
                -0.5 * u * u - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + s * rng.standard_normal()).collect()
    }
}

/// `KL(p || q) = sum_i [ ln(sq/sp) + (sp^2 + (mp - mq)^2) / (2 sq^2) - 1/2 ]`.
pub fn kl_diag_gaussian(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64> {
    check_len("kl operand dimension", p.dim(), q.dim())?;
    for s in p.std.iter().chain(&q.std) {
        if !(*s > 0.0) {
            return Err(Error::Domain(format!("standard deviation must be positive, got {s}")));
        }
    }
    Ok(kl_terms(&p.mean, &p.std, &q.mean, &q.std))
}

pub(crate) fn kl_terms(mp: &[f64], sp: &[f64], mq: &[f64], sq: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mp.len() {
        let d = mp[i] - mq[i];
        kl += (sq[i] / sp[i]).ln() + (sp[i] * sp[i] + d * d) / (2.0 * sq[i] * sq[i]) - 0.5;
    }
    kl
}

/// `KL(N(m, s^2) || N(0, I))` written in terms of the log-std to avoid a `ln(exp(.))` round trip.
pub(crate) fn kl_to_standard(mean: &[f64], std: &[f64], log_std: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mean.len() {
        kl += -log_std[i] + 0.5 * (std[i] * std[i] + mean[i] * mean[i]) - 0.5;
    }
    kl
}
