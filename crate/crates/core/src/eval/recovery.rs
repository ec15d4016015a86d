//! Post-push density recovery: how quickly each policy returns to well-covered states.

use crate::agent::{pretrain_for, train_with_dasp, TrainConfig};
use crate::env::{Dataset, KdeOracle, PointMassEnv, PushSpec};
use crate::error::{Error, Result};
use crate::eval::controller::Controller;
use crate::eval::rollout::{decrease_pct, evaluate, run_episode, Anchors, EvalReport};

pub const DEFAULT_RECOVERY_WINDOW: usize = 20;

/// Oracle log-density of the states visited in the `window` steps after each push, averaged
/// over pushes; `curve[k]` is the mean `k + 1` steps after the push.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCurve {
    pub curve: Vec<f64>,
    pub pushes: usize,
}

impl RecoveryCurve {
    pub fn mean(&self) -> f64 {
        self.curve.iter().sum::<f64>() / self.curve.len() as f64
    }
}

/// Pools every push of every episode in the run.
pub fn recovery_curve(
    controller: &dyn Controller,
    env: &PointMassEnv,
    oracle: &KdeOracle,
    push: &PushSpec,
    episodes: usize,
    seed: u64,
    window: usize,
) -> RecoveryCurve {
    let mut sums = vec![0.0; window];
    let mut counts = vec![0usize; window];
    let mut pushes = 0;
    for i in 0..episodes {
        let traj = run_episode(controller, env, Some(push), seed, i);
        for &t in &traj.push_steps {
            pushes += 1;
            for k in 0..window {
                if let Some(s) = traj.states.get(t + 1 + k) {
                    sums[k] += oracle.log_density(s);
                    counts[k] += 1;
                }
            }
        }
    }
    let curve = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect();
    RecoveryCurve { curve, pushes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedComparison {
    pub seed: u64,
    pub dasp: RecoveryCurve,
    pub ablated: RecoveryCurve,
}

impl SeedComparison {
    /// Post-push mean density of the regularized policy minus the ablated one.
    pub fn gap(&self) -> f64 {
        self.dasp.mean() - self.ablated.mean()
    }

    pub fn terminal_gap(&self) -> f64 {
        self.dasp.curve.last().copied().unwrap_or(0.0) - self.ablated.curve.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub window: usize,
    pub per_seed: Vec<SeedComparison>,
    /// Mean curves across seeds.
    pub dasp_curve: Vec<f64>,
    pub ablated_curve: Vec<f64>,
    pub terminal_gap: f64,
    /// Seeds where the regularized policy's post-push density is strictly higher.
    pub wins: usize,
}

/// Compares two policies seed by seed. `policies[k]` holds the (regularized, ablated) pair
/// trained with `seeds[k]`; both face the same starts and pushes.
pub fn density_recovery_test(
    policies: &[(&dyn Controller, &dyn Controller)],
    seeds: &[u64],
    env: &PointMassEnv,
    oracle: &KdeOracle,
    push: &PushSpec,
    episodes: usize,
    window: usize,
) -> Result<RecoveryReport> {
    if policies.len() != seeds.len() || seeds.is_empty() {
        return Err(Error::Config("need one policy pair per seed".into()));
    }
    if window == 0 || episodes == 0 {
        return Err(Error::Config("recovery window and episode count must be positive".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for (&(d, a), &seed) in policies.iter().zip(seeds) {
        per_seed.push(SeedComparison {
            seed,
            dasp: recovery_curve(d, env, oracle, push, episodes, seed, window),
            ablated: recovery_curve(a, env, oracle, push, episodes, seed, window),
        });
    }
    let n = per_seed.len() as f64;
    let avg = |f: &dyn Fn(&SeedComparison) -> &RecoveryCurve| -> Vec<f64> {
        (0..window).map(|k| per_seed.iter().map(|c| f(c).curve[k]).sum::<f64>() / n).collect()
    };
    let dasp_curve = avg(&|c| &c.dasp);
    let ablated_curve = avg(&|c| &c.ablated);
    Ok(RecoveryReport {
        window,
        terminal_gap: dasp_curve[window - 1] - ablated_curve[window - 1],
        wins: per_seed.iter().filter(|c| c.gap() > 0.0).count(),
        dasp_curve,
        ablated_curve,
        per_seed,
    })
}

/// Push evaluation of both agents of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PushedPair {
    pub seed: u64,
    pub dasp: EvalReport,
    pub ablated: EvalReport,
    /// Mean oracle log-density of the states visited without pushes, regularized then
    /// ablated; the no-push baseline of the recovery gap.
    pub unpushed_density: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryExperiment {
    pub recovery: RecoveryReport,
    pub evals: Vec<PushedPair>,
}

impl RecoveryExperiment {
    /// Decrease of the seed-averaged normalized return, regularized then ablated.
    pub fn pooled_decrease(&self) -> (Option<f64>, Option<f64>) {
        let pool = |f: &dyn Fn(&PushedPair) -> &EvalReport| {
            let n = self.evals.len() as f64;
            let plain = self.evals.iter().map(|p| f(p).unperturbed_normalized_return).sum::<f64>() / n;
            let pushed = self.evals.iter().map(|p| f(p).mean_normalized_return).sum::<f64>() / n;
            decrease_pct(plain, pushed)
        };
        (pool(&|p| &p.dasp), pool(&|p| &p.ablated))
    }
}

/// For every seed, trains the agent of `base` and its `alpha = 0` counterpart on `data`
/// (sharing one pretrained density model), then compares their post-push recovery and push
/// decrease. Evaluation episodes of a seed are drawn from that seed.
#[allow(clippy::too_many_arguments)]
pub fn recovery_experiment(
    data: &Dataset,
    base: &TrainConfig,
    seeds: &[u64],
    env: &PointMassEnv,
    oracle: &KdeOracle,
    push: &PushSpec,
    anchors: &Anchors,
    episodes: usize,
    window: usize,
) -> Result<RecoveryExperiment> {
    let mut pairs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let (dasp, _) = pretrain_for(data, &cfg)?;
        let regularized = train_with_dasp(data, &cfg, dasp.clone())?.policy;
        let ablated = train_with_dasp(data, &TrainConfig { alpha: 0.0, ..cfg }, dasp)?.policy;
        pairs.push((regularized, ablated));
    }
    let controllers: Vec<(&dyn Controller, &dyn Controller)> =
        pairs.iter().map(|(d, a)| (d as &dyn Controller, a as &dyn Controller)).collect();
    let recovery = density_recovery_test(&controllers, seeds, env, oracle, push, episodes, window)?;
    let evals = pairs
        .iter()
        .zip(seeds)
        .map(|((d, a), &seed)| {
            let unpushed = |c: &dyn Controller| -> Result<f64> {
                let r = evaluate(c, env, episodes, None, seed, anchors, Some(oracle))?;
                Ok(r.mean_log_density.expect("oracle was given"))
            };
            Ok(PushedPair {
                seed,
                dasp: evaluate(d, env, episodes, Some(push), seed, anchors, None)?,
                ablated: evaluate(a, env, episodes, Some(push), seed, anchors, None)?,
                unpushed_density: (unpushed(d)?, unpushed(a)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryExperiment { recovery, evals })
}
