//! Return as a function of the density-term weight.

use crate::agent::{pretrain_for, train_with_dasp, TrainConfig};
use crate::env::{Dataset, PointMassEnv};
use crate::error::{Error, Result};
use crate::eval::rollout::{evaluate, Anchors};

/// The grid used for the over-regularization ablation.
pub const DEFAULT_ALPHAS: [f64; 7] = [0.01, 0.05, 0.1, 0.5, 3.0, 10.0, 100.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub alpha: f64,
    /// Normalized return, or the error that stopped this cell.
    pub outcome: std::result::Result<f64, String>,
}

impl SweepCell {
    pub fn normalized_return(&self) -> Option<f64> {
        self.outcome.as_ref().ok().copied()
    }
}

/// Trains one agent per `alpha` with everything else (seed included) taken from `base`, and
/// evaluates each greedily. The density model is pretrained once and shared, which gives the
/// same model every cell would have pretrained on its own.
pub fn sweep_alpha(
    data: &Dataset,
    alphas: &[f64],
    base: &TrainConfig,
    env: &PointMassEnv,
    anchors: &Anchors,
    eval_episodes: usize,
    eval_seed: u64,
) -> Result<Vec<SweepCell>> {
    if alphas.is_empty() {
        return Err(Error::Config("alpha sweep needs at least one value".into()));
    }
    let (dasp, _) = pretrain_for(data, base)?;
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let cfg = TrainConfig { alpha, ..base.clone() };
            let outcome = train_with_dasp(data, &cfg, dasp.clone())
                .and_then(|out| evaluate(&out.policy, env, eval_episodes, None, eval_seed, anchors, None))
                .map(|r| r.mean_normalized_return)
                .map_err(|e| e.to_string());
            SweepCell { alpha, outcome }
        })
        .collect())
}

/// Best cell's return and whether the largest alpha scores strictly below it.
pub fn over_regularization(cells: &[SweepCell]) -> Option<(f64, f64, bool)> {
    let best = cells.iter().filter_map(|c| c.normalized_return()).fold(f64::NEG_INFINITY, f64::max);
    let last = cells.iter().max_by(|a, b| a.alpha.total_cmp(&b.alpha))?.normalized_return()?;
    best.is_finite().then_some((best, last, last < best))
}
