//! Anything that maps a state to an action during evaluation rollouts.

use crate::agent::GaussianPolicy;
use crate::env::{PdController, PointMassEnv, Source};
use crate::nn::SeededRng;

pub trait Controller {
    fn act(&self, env: &PointMassEnv, s: &[f64], rng: &mut SeededRng) -> Vec<f64>;
}

/// Learned policy acting greedily (`tanh` of the mean).
impl Controller for GaussianPolicy {
    fn act(&self, _env: &PointMassEnv, s: &[f64], rng: &mut SeededRng) -> Vec<f64> {
        GaussianPolicy::act(self, s, true, rng).expect("policy state width matches the environment")
    }
}

impl Controller for PdController {
    fn act(&self, env: &PointMassEnv, s: &[f64], _rng: &mut SeededRng) -> Vec<f64> {
        PdController::act(self, env, s).to_vec()
    }
}

/// The scripted data-collection policies.
impl Controller for Source {
    fn act(&self, env: &PointMassEnv, s: &[f64], rng: &mut SeededRng) -> Vec<f64> {
        Source::act(*self, env, s, rng).to_vec()
    }
}

/// Uniform actions over the environment's bounds.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomController;

impl Controller for RandomController {
    fn act(&self, env: &PointMassEnv, s: &[f64], rng: &mut SeededRng) -> Vec<f64> {
        Source::Random.act(env, s, rng).to_vec()
    }
}
