//! Training configuration and its plain-text `key = value` form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::density::{DaspTrainConfig, ScoreConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of the density score in the actor objective.
    pub alpha: f64,
    /// Std of the Gaussian perturbation applied to states for the density term.
    pub sigma: f64,
    /// Cap of the clipped density score.
    pub tau: f64,
    pub gamma: f64,
    /// Actor-critic steps after density pretraining.
    pub steps: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub ensemble_size: usize,
    pub rho: f64,
    pub hidden: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub dasp_hidden: usize,
    pub dasp_lr: f64,
    pub dasp_epochs: usize,
    pub dasp_steps_per_epoch: usize,
    pub dasp_batch_size: usize,
    pub score_samples: usize,
    pub deterministic_prediction: bool,
    /// Metrics are averaged over this many steps per CSV row.
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            sigma: 0.1,
            tau: 0.0,
            gamma: 0.95,
            steps: 10_000,
            batch_size: 256,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            ensemble_size: 2,
            rho: 0.005,
            hidden: 64,
            seed: 0,
            latent_dim: 16,
            dasp_hidden: 64,
            dasp_lr: 1e-3,
            dasp_epochs: 200,
            dasp_steps_per_epoch: 20,
            dasp_batch_size: 256,
            score_samples: 1,
            deterministic_prediction: true,
            log_interval: 100,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl TrainConfig {
    pub const KEYS: [&'static str; 21] = [
        "alpha",
        "sigma",
        "tau",
        "gamma",
        "steps",
        "batch_size",
        "actor_lr",
        "critic_lr",
        "ensemble_size",
        "rho",
        "hidden",
        "seed",
        "latent_dim",
        "dasp_hidden",
        "dasp_lr",
        "dasp_epochs",
        "dasp_steps_per_epoch",
        "dasp_batch_size",
        "score_samples",
        "deterministic_prediction",
        "log_interval",
    ];

    /// Sets one field by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "alpha" => self.alpha = parse(key, v)?,
            "sigma" => self.sigma = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "actor_lr" => self.actor_lr = parse(key, v)?,
            "critic_lr" => self.critic_lr = parse(key, v)?,
            "ensemble_size" => self.ensemble_size = parse(key, v)?,
            "rho" => self.rho = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "latent_dim" => self.latent_dim = parse(key, v)?,
            "dasp_hidden" => self.dasp_hidden = parse(key, v)?,
            "dasp_lr" => self.dasp_lr = parse(key, v)?,
            "dasp_epochs" => self.dasp_epochs = parse(key, v)?,
            "dasp_steps_per_epoch" => self.dasp_steps_per_epoch = parse(key, v)?,
            "dasp_batch_size" => self.dasp_batch_size = parse(key, v)?,
            "score_samples" => self.score_samples = parse(key, v)?,
            "deterministic_prediction" => self.deterministic_prediction = parse(key, v)?,
            "log_interval" => self.log_interval = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.alpha.to_string(),
            "sigma" => self.sigma.to_string(),
            "tau" => self.tau.to_string(),
            "gamma" => self.gamma.to_string(),
            "steps" => self.steps.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "actor_lr" => self.actor_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "ensemble_size" => self.ensemble_size.to_string(),
            "rho" => self.rho.to_string(),
            "hidden" => self.hidden.to_string(),
            "seed" => self.seed.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "dasp_hidden" => self.dasp_hidden.to_string(),
            "dasp_lr" => self.dasp_lr.to_string(),
            "dasp_epochs" => self.dasp_epochs.to_string(),
            "dasp_steps_per_epoch" => self.dasp_steps_per_epoch.to_string(),
            "dasp_batch_size" => self.dasp_batch_size.to_string(),
            "score_samples" => self.score_samples.to_string(),
            "deterministic_prediction" => self.deterministic_prediction.to_string(),
            "log_interval" => self.log_interval.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#` comments are skipped.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for k in Self::KEYS {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !self.tau.is_finite() {
            return bad("tau must be finite".into());
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("ensemble_size", self.ensemble_size),
            ("hidden", self.hidden),
            ("latent_dim", self.latent_dim),
            ("dasp_hidden", self.dasp_hidden),
            ("dasp_steps_per_epoch", self.dasp_steps_per_epoch),
            ("dasp_batch_size", self.dasp_batch_size),
            ("score_samples", self.score_samples),
            ("log_interval", self.log_interval),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("dasp_lr", self.dasp_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be >= 0, got {v}"));
            }
        }
        Ok(())
    }

    pub fn score_config(&self) -> ScoreConfig {
        ScoreConfig {
            tau: self.tau,
            n_samples: self.score_samples,
            deterministic_prediction: self.deterministic_prediction,
        }
    }

    pub fn dasp_train_config(&self) -> DaspTrainConfig {
        DaspTrainConfig {
            epochs: self.dasp_epochs,
            steps_per_epoch: self.dasp_steps_per_epoch,
            batch_size: self.dasp_batch_size,
            lr: self.dasp_lr,
        }
    }
}
