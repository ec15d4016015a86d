//! Tanh-squashed Gaussian policy.
//!
//! The network maps a state to `[mean, log_std]` over a pre-squash variable `u`; actions are
//! `center + half_width * tanh(u)` so they always respect the bounds. Log-stds are clamped to
//! `[-5, 2]`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::density::model::HeadBatch;
use crate::error::{check_len, Error, Result};
use crate::nn::{Gradients, Mlp, MlpTrace, ParamBlock, Parameters, SeededRng};

pub const POLICY_LOG_STD_MIN: f64 = -5.0;
pub const POLICY_LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    low: Vec<f64>,
    high: Vec<f64>,
}

/// Recorded batch of policy evaluations.
pub struct PolicyTape {
    trace: MlpTrace,
    head: HeadBatch,
    eps: Option<Array2<f64>>,
    squashed: Array2<f64>,
    pub actions: Array2<f64>,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        low: &[f64],
        high: &[f64],
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Self::from_net(Mlp::new(&[state_dim, hidden, hidden, 2 * action_dim], rng), low, high)
    }

    pub fn from_net(net: Mlp, low: &[f64], high: &[f64]) -> Result<Self> {
        let ad = net.output_dim() / 2;
        check_len("policy head", 2 * ad, net.output_dim())?;
        check_len("action lower bound", ad, low.len())?;
        check_len("action upper bound", ad, high.len())?;
        if low.iter().zip(high).any(|(l, h)| !(l < h)) {
            return Err(Error::Config("action bounds must satisfy low < high".into()));
        }
        Ok(Self { net, low: low.to_vec(), high: high.to_vec() })
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.low, &self.high)
    }

    fn center_and_half_width(&self) -> (Array1<f64>, Array1<f64>) {
        let c = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect();
        let w = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect();
        (c, w)
    }

    /// `tanh(mean)` when `deterministic`, otherwise a squashed Gaussian sample.
    pub fn act(&self, s: &[f64], deterministic: bool, rng: &mut SeededRng) -> Result<Vec<f64>> {
        check_len("policy state", self.state_dim(), s.len())?;
        let sv = ArrayView2::from_shape((1, s.len()), s).expect("row");
        let eps = (!deterministic).then(|| Array2::from_shape_fn((1, self.action_dim()), |_| rng.standard_normal()));
        let tape = self.forward(sv, eps.as_ref().map(|e| e.view()))?;
        Ok(tape.actions.row(0).to_vec())
    }

    pub fn act_batch(&self, states: ArrayView2<f64>, deterministic: bool, rng: &mut SeededRng) -> Result<Array2<f64>> {
        let eps = (!deterministic)
            .then(|| Array2::from_shape_fn((states.nrows(), self.action_dim()), |_| rng.standard_normal()));
        Ok(self.forward(states, eps.as_ref().map(|e| e.view()))?.actions)
    }

    /// Reparameterized actions `center + half_width * tanh(mean + std * eps)`; `eps = None`
    /// gives the deterministic action.
    pub fn forward(&self, states: ArrayView2<f64>, eps: Option<ArrayView2<f64>>) -> Result<PolicyTape> {
        let trace = self.net.forward_batch(states)?;
        let head = HeadBatch::split_clamped(trace.output(), POLICY_LOG_STD_MIN, POLICY_LOG_STD_MAX);
        let pre = match eps {
            Some(e) => {
                check_len("policy noise width", self.action_dim(), e.ncols())?;
                &head.mean + &(&head.std * &e)
            }
            None => head.mean.clone(),
        };
        let squashed = pre.mapv(f64::tanh);
        let (c, w) = self.center_and_half_width();
        let mut actions = &squashed * &w.view().insert_axis(Axis(0)) + &c.view().insert_axis(Axis(0));
        // a saturated tanh can still round past the bound
        for mut row in actions.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = v.clamp(self.low[j], self.high[j]);
            }
        }
        Ok(PolicyTape { trace, head, eps: eps.map(|e| e.to_owned()), squashed, actions })
    }

    /// Parameter gradients and state gradients of `sum_ij g_action[i, j] * action[i, j]`.
    pub fn backward(&self, tape: &PolicyTape, g_action: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        check_len("policy action gradient", self.action_dim(), g_action.ncols())?;
        let (_, w) = self.center_and_half_width();
        let g_pre = &g_action * &w.view().insert_axis(Axis(0)) * &tape.squashed.mapv(|t| 1.0 - t * t);
        let g_std = match &tape.eps {
            Some(e) => &g_pre * e,
            None => Array2::zeros(g_pre.raw_dim()),
        };
        let head = tape.head.head_grad(g_pre, &g_std);
        self.net.backward_batch(&tape.trace, head.view())
    }
}

impl Parameters for GaussianPolicy {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        self.net.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.blocks_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_policy_acts_at_center() {
        let p = GaussianPolicy::from_net(Mlp::zeros(&[4, 8, 4]), &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let a = p.act(&[1.0, 2.0, 3.0, 4.0], true, &mut SeededRng::new(0)).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn actions_respect_asymmetric_bounds() {
        let mut rng = SeededRng::new(3);
        let mut p = GaussianPolicy::new(3, 2, 16, &[-0.5, 0.0], &[2.0, 0.1], &mut rng).unwrap();
        // blow up the weights so tanh saturates
        for b in p.blocks_mut() {
            for v in b.iter_mut() {
                *v *= 50.0;
            }
        }
        for _ in 0..2000 {
            let s = rng.sample_standard_normal(3);
            for det in [true, false] {
                let a = p.act(&s, det, &mut rng).unwrap();
                assert!((-0.5..=2.0).contains(&a[0]) && (0.0..=0.1).contains(&a[1]), "{a:?}");
            }
        }
    }

    #[test]
    fn stochastic_draws_follow_the_seed() {
        let mut rng = SeededRng::new(3);
        let p = GaussianPolicy::new(2, 2, 8, &[-1.0; 2], &[1.0; 2], &mut rng).unwrap();
        let a = p.act(&[0.1, 0.2], false, &mut SeededRng::new(77)).unwrap();
        let b = p.act(&[0.1, 0.2], false, &mut SeededRng::new(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(GaussianPolicy::from_net(Mlp::zeros(&[2, 4]), &[1.0, 0.0], &[1.0, 1.0]).is_err());
    }
}
