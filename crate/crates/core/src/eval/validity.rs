//! Safe-versus-random action scoring with the trained density model.

use ndarray::Array2;

use crate::density::{DaspModel, ScoreConfig};
use crate::env::{Dataset, PointMassEnv, Source};
use crate::error::{Error, Result};
use crate::eval::controller::Controller;
use crate::nn::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityReport {
    /// Mean `exp(R)` over the safe-action set.
    pub safe_mean: f64,
    /// Mean `exp(R)` over the uniform-random-action set.
    pub unsafe_mean: f64,
    pub margin: f64,
    pub n_states: usize,
    /// Cap used for the score (the training value).
    pub tau: f64,
    /// Scores were computed against the simulator's next state instead of the model's own
    /// prediction.
    pub use_true_dynamics: bool,
}

/// Scores explicit action sets at the same states.
pub fn score_action_sets(
    dasp: &DaspModel,
    env: &PointMassEnv,
    states: &Array2<f64>,
    safe: &Array2<f64>,
    unsafe_actions: &Array2<f64>,
    score: &ScoreConfig,
    use_true_dynamics: bool,
    seed: u64,
) -> Result<ValidityReport> {
    let mean_exp = |actions: &Array2<f64>, tag: u64| -> Result<f64> {
        let mut rng = SeededRng::substream(seed, tag);
        let scores = if use_true_dynamics {
            let mut next = Array2::zeros(states.raw_dim());
            for (i, (s, a)) in states.rows().into_iter().zip(actions.rows()).enumerate() {
                let (n, _, _) = env.dynamics(s.as_slice().expect("row"), a.as_slice().expect("row"));
                next.row_mut(i).assign(&ndarray::aview1(&n));
            }
            dasp.score_given_next(states.view(), actions.view(), next.view(), score, &mut rng)?
        } else {
            dasp.score_batch(states.view(), actions.view(), score, &mut rng, false)?.scores
        };
        Ok(scores.iter().map(|r| r.exp()).sum::<f64>() / scores.len() as f64)
    };
    // both sets draw the same latent noise
    let safe_mean = mean_exp(safe, 1)?;
    let unsafe_mean = mean_exp(unsafe_actions, 1)?;
    Ok(ValidityReport {
        safe_mean,
        unsafe_mean,
        margin: safe_mean - unsafe_mean,
        n_states: states.nrows(),
        tau: score.tau,
        use_true_dynamics,
    })
}

/// Samples `n_states` dataset states; safe actions come from `safe_policy`, unsafe ones are
/// uniform over the action bounds.
#[allow(clippy::too_many_arguments)]
pub fn validity_analysis(
    dasp: &DaspModel,
    data: &Dataset,
    env: &PointMassEnv,
    safe_policy: &dyn Controller,
    n_states: usize,
    score: &ScoreConfig,
    use_true_dynamics: bool,
    seed: u64,
) -> Result<ValidityReport> {
    if n_states == 0 || data.is_empty() {
        return Err(Error::Config("validity analysis needs states to score".into()));
    }
    let mut rng = SeededRng::substream(seed, 0);
    let idx: Vec<usize> = (0..n_states).map(|_| rng.index(data.len())).collect();
    let states = data.batch(&idx).states;
    let ad = data.action_dim();
    let mut safe = Array2::zeros((n_states, ad));
    let mut random = Array2::zeros((n_states, ad));
    for (i, s) in states.rows().into_iter().enumerate() {
        let s = s.to_vec();
        safe.row_mut(i).assign(&ndarray::aview1(&safe_policy.act(env, &s, &mut rng)));
        random.row_mut(i).assign(&ndarray::aview1(&Source::Random.act(env, &s, &mut rng)));
    }
    score_action_sets(dasp, env, &states, &safe, &random, score, use_true_dynamics, seed)
}
