//! Actor objective and the offline training loop.
//!
//! The actor maximizes
//!
//! ```text
//! J = mean_i [ min_j Q_j(s_i, a_i) + alpha * R(s_hat_i, a_hat_i) ]
//! a_i ~ pi(s_i),  s_hat_i = s_i + sigma * xi_i,  a_hat_i ~ pi(s_hat_i)
//! ```
//!
//! with both actions reparameterized so the gradient reaches the policy through Q and through
//! the density score `R`.

use ndarray::{Array2, ArrayView2};

use crate::agent::config::TrainConfig;
use crate::agent::critic::{critic_update, CriticOptimizer, QEnsemble};
use crate::agent::policy::GaussianPolicy;
use crate::density::{pretrain_dasp, DaspModel, EpochLoss, ScoreConfig};
use crate::env::{Dataset, PointMassEnv};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Checkpoint, Gradients, SeededRng};

/// `s + eps`, `eps ~ N(0, sigma^2 I)`.
pub fn perturb_state(s: &[f64], sigma: f64, rng: &mut SeededRng) -> Vec<f64> {
    s.iter().map(|x| x + sigma * rng.standard_normal()).collect()
}

/// Row-wise [`perturb_state`].
pub fn perturb_states(s: ArrayView2<f64>, sigma: f64, rng: &mut SeededRng) -> Array2<f64> {
    let noise = Array2::from_shape_fn(s.raw_dim(), |_| rng.standard_normal());
    &s + &(noise * sigma)
}

/// Inputs of the density term of the actor objective.
pub struct DensityTerm<'a> {
    pub dasp: &'a DaspModel,
    pub alpha: f64,
    /// Perturbed states, one per batch row.
    pub perturbed: ArrayView2<'a, f64>,
    /// Policy noise for the actions taken at the perturbed states.
    pub eps: ArrayView2<'a, f64>,
    pub score: ScoreConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorTerms {
    pub q_term: f64,
    /// Mean density score over the batch (computed even when `alpha = 0`).
    pub r_term: f64,
    pub r_clipped_fraction: f64,
    pub r_values: Vec<f64>,
}

pub struct ActorObjective {
    pub value: f64,
    pub terms: ActorTerms,
    /// Gradient of `value` (the quantity being maximized) with respect to the policy.
    pub grads: Gradients,
}

/// Evaluates the actor objective and its policy gradient with all randomness supplied by the
/// caller, so repeated calls with cloned inputs see common random numbers.
pub fn actor_objective(
    policy: &GaussianPolicy,
    critic: &QEnsemble,
    states: ArrayView2<f64>,
    q_eps: ArrayView2<f64>,
    density: Option<DensityTerm<'_>>,
    score_rng: &mut SeededRng,
) -> Result<ActorObjective> {
    let b = states.nrows();
    if b == 0 {
        return Err(Error::Config("actor update needs a non-empty batch".into()));
    }
    let inv_b = 1.0 / b as f64;
    let tape = policy.forward(states, Some(q_eps))?;
    let g_up = ndarray::Array1::from_elem(b, inv_b);
    let (q_min, g_a) = critic.min_q_action_grad(states, tape.actions.view(), g_up.view())?;
    let q_term = q_min.sum() * inv_b;
    if !q_term.is_finite() {
        return Err(Error::NumericFault("actor Q term".into()));
    }
    let (mut grads, _) = policy.backward(&tape, g_a.view())?;

    let mut terms = ActorTerms { q_term, r_term: 0.0, r_clipped_fraction: 0.0, r_values: Vec::new() };
    let mut value = q_term;
    if let Some(d) = density {
        let tape_hat = policy.forward(d.perturbed, Some(d.eps))?;
        let with_grad = d.alpha != 0.0;
        let sb =
            d.dasp.score_batch(d.perturbed, tape_hat.actions.view(), &d.score, score_rng, with_grad).map_err(|e| {
                match e {
                    Error::NumericFault(_) => Error::NumericFault("actor density term".into()),
                    other => other,
                }
            })?;
        terms.r_term = sb.mean();
        terms.r_clipped_fraction = sb.clipped_fraction.iter().sum::<f64>() * inv_b;
        terms.r_values = sb.scores;
        if !terms.r_term.is_finite() {
            return Err(Error::NumericFault("actor density term".into()));
        }
        if let Some(g_r) = sb.action_grad {
            let (r_grads, _) = policy.backward(&tape_hat, (g_r * (d.alpha * inv_b)).view())?;
            grads.add_assign(&r_grads);
        }
        value += d.alpha * terms.r_term;
    }
    Ok(ActorObjective { value, terms, grads })
}

/// Separate random streams for each consumer inside one training step.
///
/// Keeping the density-term draws on their own stream means switching the density term off
/// leaves every other draw untouched.
#[derive(Debug, Clone)]
pub struct StepRngs {
    pub batch: SeededRng,
    pub critic: SeededRng,
    pub actor: SeededRng,
    pub density: SeededRng,
}

impl StepRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            batch: SeededRng::substream(seed, 2),
            critic: SeededRng::substream(seed, 3),
            actor: SeededRng::substream(seed, 4),
            density: SeededRng::substream(seed, 5),
        }
    }
}

/// One ascent step of the actor objective on `states`.
///
/// With `dasp = None` the density term is removed entirely (nothing is drawn from
/// `rngs.density`).
#[allow(clippy::too_many_arguments)]
pub fn actor_update(
    policy: &mut GaussianPolicy,
    adam: &mut AdamState,
    critic: &QEnsemble,
    dasp: Option<&DaspModel>,
    states: ArrayView2<f64>,
    config: &TrainConfig,
    actor_rng: &mut SeededRng,
    density_rng: &mut SeededRng,
) -> Result<ActorTerms> {
    let (b, ad) = (states.nrows(), policy.action_dim());
    let q_eps = Array2::from_shape_fn((b, ad), |_| actor_rng.standard_normal());
    let obj = match dasp {
        Some(dasp) => {
            let perturbed = perturb_states(states, config.sigma, density_rng);
            let eps = Array2::from_shape_fn((b, ad), |_| density_rng.standard_normal());
            let term = DensityTerm {
                dasp,
                alpha: config.alpha,
                perturbed: perturbed.view(),
                eps: eps.view(),
                score: config.score_config(),
            };
            actor_objective(policy, critic, states, q_eps.view(), Some(term), density_rng)?
        }
        None => actor_objective(policy, critic, states, q_eps.view(), None, density_rng)?,
    };
    let mut step = obj.grads;
    step.scale(-1.0);
    adam.step(policy, &step)?;
    Ok(obj.terms)
}

/// One row of the training metrics log, averaged over `log_interval` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub critic_loss_mean: f64,
    pub actor_q_term: f64,
    pub actor_r_term: f64,
    pub r_term_clipped_fraction: f64,
}

impl MetricsRow {
    pub const HEADER: [&'static str; 5] =
        ["step", "critic_loss_mean", "actor_q_term", "actor_r_term", "r_term_clipped_fraction"];
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: GaussianPolicy,
    pub critic: QEnsemble,
    pub dasp: DaspModel,
    pub metrics: Vec<MetricsRow>,
    /// Per-epoch density pretraining loss; empty when a pretrained model was supplied.
    pub dasp_curve: Vec<EpochLoss>,
    /// Largest per-sample density score seen during training.
    pub max_r_value: f64,
}

impl TrainOutput {
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new();
        let (low, high) = self.policy.bounds();
        c.push("policy.low", vec![low.len()], low.to_vec());
        c.push("policy.high", vec![high.len()], high.to_vec());
        c.push_params("policy", &self.policy.net);
        c.push_scalar("critic.size", self.critic.size() as f64);
        c.push_scalar("critic.rho", self.critic.rho);
        for (j, (m, t)) in self.critic.members.iter().zip(&self.critic.targets).enumerate() {
            c.push_params(&format!("critic.member{j}"), m);
            c.push_params(&format!("critic.target{j}"), t);
        }
        c.push_params("dasp", &self.dasp);
        c
    }
}

/// Action bounds of the environment a dataset was collected in.
pub fn action_bounds_for(data: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    match data.meta.env_id.as_str() {
        PointMassEnv::ID => {
            let (lo, hi) = PointMassEnv::default().action_bounds();
            Ok((lo.to_vec(), hi.to_vec()))
        }
        other => Err(Error::Config(format!("unknown environment {other:?}"))),
    }
}

/// Initializes and pretrains the density model exactly as [`train`] does.
pub fn pretrain_for(data: &Dataset, config: &TrainConfig) -> Result<(DaspModel, Vec<EpochLoss>)> {
    config.validate()?;
    let mut rng = SeededRng::substream(config.seed, 1);
    let model = DaspModel::new(data.state_dim(), data.action_dim(), config.latent_dim, config.dasp_hidden, &mut rng);
    pretrain_dasp(model, data, &config.dasp_train_config(), &mut rng)
}

/// Full training run: density pretraining followed by `config.steps` actor-critic steps.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let (dasp, curve) = pretrain_for(data, config)?;
    let mut out = train_with_dasp(data, config, dasp)?;
    out.dasp_curve = curve;
    Ok(out)
}

/// Training with an already pretrained density model. Equal to [`train`] when `dasp` came
/// from [`pretrain_for`] with the same config.
pub fn train_with_dasp(data: &Dataset, config: &TrainConfig, dasp: DaspModel) -> Result<TrainOutput> {
    run(data, config, dasp, true)
}

/// The same loop with the density term removed from the actor objective altogether.
pub fn train_without_density_term(data: &Dataset, config: &TrainConfig, dasp: DaspModel) -> Result<TrainOutput> {
    run(data, config, dasp, false)
}

fn run(data: &Dataset, config: &TrainConfig, dasp: DaspModel, density_term: bool) -> Result<TrainOutput> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if dasp.state_dim() != data.state_dim() || dasp.action_dim() != data.action_dim() {
        return Err(Error::Config("density model does not match the dataset".into()));
    }
    let (low, high) = action_bounds_for(data)?;
    let (sd, ad) = (data.state_dim(), data.action_dim());
    let mut init = SeededRng::substream(config.seed, 0);
    let mut policy = GaussianPolicy::new(sd, ad, config.hidden, &low, &high, &mut init)?;
    let mut critic = QEnsemble::new(sd, ad, config.hidden, config.ensemble_size, config.rho, &mut init)?;
    let mut actor_adam = AdamState::new(AdamConfig::with_lr(config.actor_lr), &policy);
    let mut critic_opt = CriticOptimizer::new(AdamConfig::with_lr(config.critic_lr), &critic);
    let mut rngs = StepRngs::new(config.seed);

    let mut metrics = Vec::new();
    let mut acc = [0.0; 4];
    let mut in_window = 0usize;
    let mut max_r = f64::NEG_INFINITY;
    for t in 0..config.steps {
        let batch = data.sample_batch(config.batch_size, &mut rngs.batch);
        let losses = critic_update(&mut critic, &mut critic_opt, &policy, &batch, config.gamma, &mut rngs.critic)?;
        let terms = actor_update(
            &mut policy,
            &mut actor_adam,
            &critic,
            density_term.then_some(&dasp),
            batch.states.view(),
            config,
            &mut rngs.actor,
            &mut rngs.density,
        )?;
        for &r in &terms.r_values {
            max_r = max_r.max(r);
        }
        acc[0] += losses.iter().sum::<f64>() / losses.len() as f64;
        acc[1] += terms.q_term;
        acc[2] += terms.r_term;
        acc[3] += terms.r_clipped_fraction;
        in_window += 1;
        if (t + 1) % config.log_interval == 0 || t + 1 == config.steps {
            let k = in_window as f64;
            metrics.push(MetricsRow {
                step: t + 1,
                critic_loss_mean: acc[0] / k,
                actor_q_term: acc[1] / k,
                actor_r_term: acc[2] / k,
                r_term_clipped_fraction: acc[3] / k,
            });
            acc = [0.0; 4];
            in_window = 0;
        }
    }
    Ok(TrainOutput { policy, critic, dasp, metrics, dasp_curve: Vec::new(), max_r_value: max_r })
}
