//! Gaussian kernel density estimate over dataset states.
//!
//! Used only to verify density claims, never during training. Each dimension is scaled by its
//! sample standard deviation, so the kernel covariance is `diag(h * std_d)^2` with a single
//! bandwidth factor `h` (Scott's rule `n^(-1/(d+4))` by default).

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone)]
pub struct KdeOracle {
    reference: Array2<f64>,
    scale: Vec<f64>,
    bandwidth: f64,
    log_norm: f64,
}

impl KdeOracle {
    pub fn scott_factor(n: usize, dim: usize) -> f64 {
        (n as f64).powf(-1.0 / (dim as f64 + 4.0))
    }

    pub fn new(reference: ArrayView2<f64>) -> Result<Self> {
        let h = Self::scott_factor(reference.nrows(), reference.ncols());
        Self::with_bandwidth(reference, h)
    }

    pub fn with_bandwidth(reference: ArrayView2<f64>, bandwidth: f64) -> Result<Self> {
        let (n, d) = reference.dim();
        if n < 2 {
            return Err(Error::Domain("a density estimate needs at least two states".into()));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let mean = reference.mean_axis(Axis(0)).expect("non-empty");
        let mut scale = Vec::with_capacity(d);
        for j in 0..d {
            let col = reference.column(j);
            let var = col.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(Error::Domain(format!("state dimension {j} has zero variance")));
            }
            scale.push(var.sqrt());
        }
        let log_norm = -(n as f64).ln()
            - scale.iter().map(|s| (bandwidth * s).ln()).sum::<f64>()
            - 0.5 * d as f64 * (2.0 * PI).ln();
        Ok(Self { reference: reference.to_owned(), scale, bandwidth, log_norm })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.reference.ncols()
    }

    pub fn kernel_widths(&self) -> Vec<f64> {
        self.scale.iter().map(|s| self.bandwidth * s).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let inv: Vec<f64> = self.kernel_widths().iter().map(|w| 1.0 / w).collect();
        let mut exps: Vec<f64> = self
            .reference
            .rows()
            .into_iter()
            .map(|r| {
                let mut q = 0.0;
                for j in 0..x.len() {
                    let u = (x[j] - r[j]) * inv[j];
                    q += u * u;
                }
                -0.5 * q
            })
            .collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for e in &mut exps {
            *e = (*e - max).exp();
        }
        max + exps.iter().sum::<f64>().ln() + self.log_norm
    }

    pub fn try_log_density(&self, x: &[f64]) -> Result<f64> {
        check_len("kde query", self.dim(), x.len())?;
        Ok(self.log_density(x))
    }
}
