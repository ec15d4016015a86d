#![allow(dead_code)]

pub mod cli_runs;
pub mod gradient_suite;

use std::f64::consts::PI;

use dasp_rl::density::{mean_dataset_loss, pretrain_dasp, DaspModel, DaspTrainConfig};
use dasp_rl::env::{Dataset, DatasetMeta, Tier, Transition};
use dasp_rl::nn::{Parameters, SeededRng};

/// Central differences of `f` at `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise relative error. Each element is compared relative to the larger of
/// the two values, floored at 1e-3 of the gradient's largest entry so entries that are zero up
/// to rounding are judged against the gradient's own scale.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().chain(analytic).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * scale).max(1e-12);
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

/// Finite-difference gradient of `f` with respect to every parameter of a clone of `model`.
pub fn param_fd<P: Parameters + Clone>(model: &P, mut f: impl FnMut(&P) -> f64, h: f64) -> Vec<f64> {
    let mut probe = model.clone();
    central_diff(
        |theta| {
            probe.set_flat_params(theta).unwrap();
            f(&probe)
        },
        &model.flat_params(),
        h,
    )
}

/// `s' = a_coef * s + b_coef * a + noise_std * eps` with `s ~ N(0, 1)`, `a ~ N(0, 1)`:
/// the stationary marginal of `s'` is `N(0, a_coef^2 + b_coef^2 + noise_std^2)`.
pub fn linear_gaussian_dataset(n: usize, a_coef: f64, b_coef: f64, noise_std: f64, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let transitions: Vec<Transition> = (0..n)
        .map(|_| {
            let s = rng.standard_normal();
            let a = rng.standard_normal();
            let next = a_coef * s + b_coef * a + noise_std * rng.standard_normal();
            Transition { state: vec![s], action: vec![a], reward: 0.0, next_state: vec![next], terminal: false }
        })
        .collect();
    let meta = DatasetMeta { env_id: "linear-gaussian".into(), tier: Tier::Random, seed };
    Dataset::from_transitions(meta, &transitions).unwrap()
}

/// Trains a small density model on `data` from a fresh seeded init.
pub fn fit_density(data: &Dataset, seed: u64, epochs: usize) -> (DaspModel, DaspModel) {
    let mut rng = SeededRng::new(seed);
    let init = DaspModel::new(data.state_dim(), data.action_dim(), 4, 32, &mut rng);
    let cfg = DaspTrainConfig { epochs, ..DaspTrainConfig::default() };
    let (trained, _) = pretrain_dasp(init.clone(), data, &cfg, &mut rng).unwrap();
    (init, trained)
}

/// Held-out comparison of the trained variational objective with the true mean log-density of
/// `s'` on a 1-D linear-Gaussian system. The negated loss equals the lower bound up to the
/// normalizer of a unit-precision-two Gaussian decoder, `-(S/2) ln pi`.
pub struct BoundCheck {
    pub objective: f64,
    pub true_mean: f64,
}

impl BoundCheck {
    pub fn gap(&self) -> f64 {
        self.objective - self.true_mean
    }
}

pub fn bound_check() -> BoundCheck {
    let (a, b, noise) = (0.6, 0.5, 0.3);
    let var = a * a + b * b + noise * noise;
    let data = linear_gaussian_dataset(20_000, a, b, noise, 10);
    let held_out = linear_gaussian_dataset(20_000, a, b, noise, 11);
    let (_, trained) = fit_density(&data, 12, 200);
    let loss = mean_dataset_loss(&trained, &held_out, &mut SeededRng::new(13)).unwrap();
    let true_mean =
        held_out.next_states.column(0).iter().map(|x| -0.5 * (2.0 * PI * var).ln() - x * x / (2.0 * var)).sum::<f64>()
            / held_out.len() as f64;
    BoundCheck { objective: -loss.total - 0.5 * PI.ln(), true_mean }
}
