//! Scored rollouts, normalization anchors and the push-decrease metric.

use sha2::{Digest, Sha256};

use crate::env::{apply_push, KdeOracle, PdController, PointMassEnv, PushSpec, STATE_DIM};
use crate::error::{Error, Result};
use crate::eval::controller::{Controller, RandomController};
use crate::nn::SeededRng;

/// Bumped whenever the anchor measurement protocol changes.
const ANCHOR_PROTOCOL: u32 = 1;
pub const DEFAULT_ANCHOR_EPISODES: usize = 500;
pub const DEFAULT_ANCHOR_SEED: u64 = 0x5eed;

/// Hex digest identifying an environment build (id, dynamics config, anchor protocol).
pub fn env_fingerprint(env: &PointMassEnv) -> String {
    let mut h = Sha256::new();
    h.update(format!("{}|{:?}|anchor-protocol-{ANCHOR_PROTOCOL}", PointMassEnv::ID, env.config));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean returns of the scripted random and expert controllers, measured in this harness.
#[derive(Debug, Clone, PartialEq)]
pub struct Anchors {
    pub random: f64,
    pub expert: f64,
    pub episodes: usize,
    pub seed: u64,
    pub env_fingerprint: String,
}

impl Anchors {
    pub fn measure(env: &PointMassEnv, episodes: usize, seed: u64) -> Result<Self> {
        let random = mean(&rollout_returns(&RandomController, env, episodes, seed)?);
        let expert = mean(&rollout_returns(&PdController::default(), env, episodes, seed)?);
        if !(expert > random) {
            return Err(Error::Domain(format!("expert anchor {expert} does not exceed random anchor {random}")));
        }
        Ok(Self { random, expert, episodes, seed, env_fingerprint: env_fingerprint(env) })
    }

    pub fn default_for(env: &PointMassEnv) -> Result<Self> {
        Self::measure(env, DEFAULT_ANCHOR_EPISODES, DEFAULT_ANCHOR_SEED)
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        100.0 * (raw - self.random) / (self.expert - self.random)
    }

    /// Fails when the anchors were measured on a different environment build.
    pub fn check(&self, env: &PointMassEnv) -> Result<()> {
        let now = env_fingerprint(env);
        if now != self.env_fingerprint {
            return Err(Error::Config(format!(
                "normalization anchors belong to environment {} but this is {now}",
                self.env_fingerprint
            )));
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Random streams of episode `i`: start state and actions, and pushes.
///
/// Pushes have their own stream so pushed and unpushed runs of the same episode start from
/// the same state, and two policies see the same push sequence.
pub(crate) fn episode_streams(seed: u64, i: usize) -> (SeededRng, SeededRng) {
    (SeededRng::substream(seed, 2 * i as u64), SeededRng::substream(seed, 2 * i as u64 + 1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub raw_return: f64,
    pub normalized_return: f64,
    pub length: usize,
    pub reached_goal: bool,
    pub pushes: usize,
    /// Mean oracle log-density of the visited states, when an oracle was supplied.
    pub mean_log_density: Option<f64>,
}

/// A full trajectory: visited states (including the start) and the step indices right after
/// which a push was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<[f64; STATE_DIM]>,
    pub rewards: Vec<f64>,
    pub push_steps: Vec<usize>,
    pub reached_goal: bool,
}

impl Trajectory {
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// One episode. When `push` is set, a push is applied to the state after every
/// `push.period` steps (the pushed state replaces the visited state).
pub fn run_episode(
    controller: &dyn Controller,
    env: &PointMassEnv,
    push: Option<&PushSpec>,
    seed: u64,
    episode: usize,
) -> Trajectory {
    let (mut rng, mut push_rng) = episode_streams(seed, episode);
    let mut env = env.clone();
    let mut s = env.reset(&mut rng);
    let mut traj = Trajectory { states: vec![s], rewards: Vec::new(), push_steps: Vec::new(), reached_goal: false };
    loop {
        let a = controller.act(&env, &s, &mut rng);
        let step = env.step(&s, &a);
        traj.rewards.push(step.reward);
        s = step.next_state;
        if step.terminal {
            traj.reached_goal = true;
        }
        if step.done() {
            traj.states.push(s);
            break;
        }
        if let Some(p) = push {
            if p.period > 0 && env.elapsed() % p.period == 0 {
                s = apply_push(&s, p, &mut push_rng).state;
                traj.push_steps.push(env.elapsed());
            }
        }
        traj.states.push(s);
    }
    traj
}

pub fn rollout_returns(
    controller: &dyn Controller,
    env: &PointMassEnv,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    Ok((0..episodes).map(|i| run_episode(controller, env, None, seed, i).ret()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mean_normalized_return: f64,
    pub raw_return_mean: f64,
    pub raw_return_std: f64,
    /// Normalized return of the same episodes without pushes.
    pub unperturbed_normalized_return: f64,
    /// `100 * (unperturbed - pushed) / unperturbed`; `None` when the unperturbed score is
    /// not positive.
    pub decrease_pct: Option<f64>,
    pub episodes: Vec<EpisodeRecord>,
    pub mean_log_density: Option<f64>,
    pub push: Option<PushSpec>,
    pub anchors: Anchors,
}

pub fn decrease_pct(unperturbed: f64, pushed: f64) -> Option<f64> {
    (unperturbed > 0.0).then(|| 100.0 * (unperturbed - pushed) / unperturbed)
}

fn summarize(
    controller: &dyn Controller,
    env: &PointMassEnv,
    episodes: usize,
    push: Option<&PushSpec>,
    seed: u64,
    anchors: &Anchors,
    oracle: Option<&KdeOracle>,
) -> (Vec<EpisodeRecord>, Vec<f64>) {
    let mut records = Vec::with_capacity(episodes);
    let mut all_density = Vec::new();
    for i in 0..episodes {
        let traj = run_episode(controller, env, push, seed, i);
        let dens: Option<Vec<f64>> = oracle.map(|o| traj.states.iter().map(|s| o.log_density(s)).collect());
        let ret = traj.ret();
        records.push(EpisodeRecord {
            episode: i,
            raw_return: ret,
            normalized_return: anchors.normalize(ret),
            length: traj.rewards.len(),
            reached_goal: traj.reached_goal,
            pushes: traj.push_steps.len(),
            mean_log_density: dens.as_ref().map(|d| mean(d)),
        });
        if let Some(d) = dens {
            all_density.extend(d);
        }
    }
    (records, all_density)
}

/// Greedy rollouts of `controller`; with a push spec the same episodes are also run without
/// pushes to obtain the decrease metric.
pub fn evaluate(
    controller: &dyn Controller,
    env: &PointMassEnv,
    episodes: usize,
    push: Option<&PushSpec>,
    seed: u64,
    anchors: &Anchors,
    oracle: Option<&KdeOracle>,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    anchors.check(env)?;
    let (records, density) = summarize(controller, env, episodes, push, seed, anchors, oracle);
    let raw: Vec<f64> = records.iter().map(|r| r.raw_return).collect();
    let normalized = mean(&records.iter().map(|r| r.normalized_return).collect::<Vec<_>>());
    let unperturbed = match push {
        Some(_) => {
            let (base, _) = summarize(controller, env, episodes, None, seed, anchors, None);
            mean(&base.iter().map(|r| r.normalized_return).collect::<Vec<_>>())
        }
        None => normalized,
    };
    Ok(EvalReport {
        mean_normalized_return: normalized,
        raw_return_mean: mean(&raw),
        raw_return_std: std(&raw),
        unperturbed_normalized_return: unperturbed,
        decrease_pct: decrease_pct(unperturbed, normalized),
        episodes: records,
        mean_log_density: (!density.is_empty()).then(|| mean(&density)),
        push: push.copied(),
        anchors: anchors.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PointMassConfig, PushLevel};

    #[test]
    fn decrease_is_null_for_non_positive_baseline() {
        assert_eq!(decrease_pct(0.0, -5.0), None);
        assert_eq!(decrease_pct(-3.0, -5.0), None);
        assert_eq!(decrease_pct(50.0, 40.0), Some(20.0));
    }

    #[test]
    fn fingerprint_tracks_config() {
        let a = PointMassEnv::default();
        let b = PointMassEnv::new(PointMassConfig { horizon: 100, ..PointMassConfig::default() });
        assert_ne!(env_fingerprint(&a), env_fingerprint(&b));
        assert_eq!(env_fingerprint(&a), env_fingerprint(&PointMassEnv::default()));
    }

    #[test]
    fn mismatched_anchors_rejected() {
        let env = PointMassEnv::default();
        let anchors = Anchors::measure(&env, 5, 1).unwrap();
        let other = PointMassEnv::new(PointMassConfig { goal: [2.0, 3.0], ..PointMassConfig::default() });
        assert!(evaluate(&RandomController, &other, 1, None, 0, &anchors, None).is_err());
    }

    #[test]
    fn pushes_happen_on_period() {
        let env = PointMassEnv::default();
        let spec = PushSpec::new(PushLevel::Slight);
        let traj = run_episode(&RandomController, &env, Some(&spec), 3, 0);
        assert_eq!(traj.push_steps, vec![40, 80, 120, 160]);
        assert_eq!(traj.states.len(), traj.rewards.len() + 1);
    }

    #[test]
    fn pushed_and_plain_runs_share_the_start() {
        let env = PointMassEnv::default();
        let spec = PushSpec::new(PushLevel::Large);
        let a = run_episode(&PdController::default(), &env, Some(&spec), 9, 2);
        let b = run_episode(&PdController::default(), &env, None, 9, 2);
        assert_eq!(a.states[..40], b.states[..40]);
        assert_ne!(a.states[40], b.states[40]);
    }
}
