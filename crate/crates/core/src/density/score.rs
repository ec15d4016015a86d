//! The clipped one-step-forward density score.
//!
//! For a (possibly perturbed) state `s` and action `a`:
//!
//! ```text
//! R(s, a) = 1/n * sum_k min(-L(s, a, s'_k), tau),   s'_k ~ predicted next state
//! ```
//!
//! where `L` is the three-term density loss. Higher is denser; the cap `tau` makes the score
//! stop rewarding density once it is high enough. Since `L >= 0`, the default `tau = 0` caps
//! at the best attainable value.

use ndarray::{Array2, ArrayView2};

use crate::density::model::DaspModel;
use crate::error::{check_len, Error, Result};
use crate::nn::{Parameters, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub tau: f64,
    pub n_samples: usize,
    /// Predict the next state from the encoder and decoder means instead of sampling.
    pub deterministic_prediction: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { tau: 0.0, n_samples: 1, deterministic_prediction: true }
    }
}

/// `f_tau(x) = min(x, tau)`.
pub fn clip_score(x: f64, tau: f64) -> f64 {
    x.min(tau)
}

/// Per-row scores of a batch.
#[derive(Debug, Clone)]
pub struct ScoreBatch {
    /// `R` for each row.
    pub scores: Vec<f64>,
    /// Fraction of the `n_samples` draws of each row that hit the cap.
    pub clipped_fraction: Vec<f64>,
    /// `dR_i / da_i` per row when requested.
    pub action_grad: Option<Array2<f64>>,
}

impl ScoreBatch {
    pub fn mean(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

impl DaspModel {
    /// Scores one `(s, a)` pair.
    pub fn density_score(&self, s_hat: &[f64], a: &[f64], config: &ScoreConfig, rng: &mut SeededRng) -> Result<f64> {
        check_len("state", self.state_dim(), s_hat.len())?;
        check_len("action", self.action_dim(), a.len())?;
        let sv = ArrayView2::from_shape((1, s_hat.len()), s_hat).expect("row");
        let av = ArrayView2::from_shape((1, a.len()), a).expect("row");
        Ok(self.score_batch(sv, av, config, rng, false)?.scores[0])
    }

    /// Scores every row; optionally differentiates each score with respect to its action,
    /// through both the loss and the predicted next state.
    pub fn score_batch(
        &self,
        s_hat: ArrayView2<f64>,
        a: ArrayView2<f64>,
        config: &ScoreConfig,
        rng: &mut SeededRng,
        with_grad: bool,
    ) -> Result<ScoreBatch> {
        if config.n_samples == 0 {
            return Err(Error::Config("density score needs at least one sample".into()));
        }
        if !self.all_finite() {
            return Err(Error::NumericFault("density model parameters".into()));
        }
        let b = s_hat.nrows();
        let (k, d) = (self.latent_dim(), self.state_dim());
        let inv_n = 1.0 / config.n_samples as f64;
        let mut scores = vec![0.0; b];
        let mut clipped = vec![0.0; b];
        let mut grad = with_grad.then(|| Array2::<f64>::zeros((b, self.action_dim())));

        for _ in 0..config.n_samples {
            let (eps_z, eps_x) = if config.deterministic_prediction {
                (None, None)
            } else {
                (
                    Some(Array2::from_shape_fn((b, k), |_| rng.standard_normal())),
                    Some(Array2::from_shape_fn((b, d), |_| rng.standard_normal())),
                )
            };
            let pred =
                self.predict_forward(s_hat, a, eps_z.as_ref().map(|e| e.view()), eps_x.as_ref().map(|e| e.view()))?;
            let eps = Array2::from_shape_fn((b, k), |_| rng.standard_normal());
            let tape = self.loss_forward(s_hat, a, pred.next_state.view(), eps.view())?;
            let mut weights = vec![0.0; b];
            for (i, t) in tape.terms.iter().enumerate() {
                if !t.total.is_finite() {
                    return Err(Error::NumericFault("density score".into()));
                }
                let raw = -t.total;
                scores[i] += inv_n * clip_score(raw, config.tau);
                if raw > config.tau {
                    clipped[i] += inv_n;
                } else {
                    weights[i] = -inv_n;
                }
            }
            if let Some(g) = grad.as_mut() {
                let (_, inputs) = self.loss_backward(&tape, &weights)?;
                *g += &inputs.action;
                let (_, _, g_a) = self.predict_backward(&pred, inputs.next_state.view())?;
                *g += &g_a;
            }
        }
        Ok(ScoreBatch { scores, clipped_fraction: clipped, action_grad: grad })
    }

    /// Scores `(s, a)` against externally supplied next states (for example the true simulator
    /// step) instead of the model's own prediction.
    pub fn score_given_next(
        &self,
        s: ArrayView2<f64>,
        a: ArrayView2<f64>,
        s_next: ArrayView2<f64>,
        config: &ScoreConfig,
        rng: &mut SeededRng,
    ) -> Result<Vec<f64>> {
        let b = s.nrows();
        let inv_n = 1.0 / config.n_samples.max(1) as f64;
        let mut scores = vec![0.0; b];
        for _ in 0..config.n_samples.max(1) {
            let eps = Array2::from_shape_fn((b, self.latent_dim()), |_| rng.standard_normal());
            let tape = self.loss_forward(s, a, s_next, eps.view())?;
            for (i, t) in tape.terms.iter().enumerate() {
                scores[i] += inv_n * clip_score(-t.total, config.tau);
            }
        }
        Ok(scores)
    }
}
