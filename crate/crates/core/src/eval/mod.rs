//! Evaluation protocols: normalized returns under pushes, density recovery, validity of the
//! density score and the α sweep.

pub mod controller;
pub mod recovery;
pub mod rollout;
pub mod sweep;
pub mod validity;

pub use controller::{Controller, RandomController};
pub use recovery::{
    density_recovery_test, recovery_curve, recovery_experiment, PushedPair, RecoveryCurve, RecoveryExperiment,
    RecoveryReport, SeedComparison, DEFAULT_RECOVERY_WINDOW,
};
pub use rollout::{
    decrease_pct, env_fingerprint, evaluate, rollout_returns, run_episode, Anchors, EpisodeRecord, EvalReport,
    Trajectory,
};
pub use sweep::{over_regularization, sweep_alpha, SweepCell, DEFAULT_ALPHAS};
pub use validity::{score_action_sets, validity_analysis, ValidityReport};
