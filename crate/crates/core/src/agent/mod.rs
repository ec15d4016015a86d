//! Q-ensemble actor-critic with a density-score regularized actor.

pub mod config;
pub mod critic;
pub mod policy;
pub mod trainer;

pub use config::TrainConfig;
pub use critic::{bellman_target, critic_update, regress_members, CriticOptimizer, QEnsemble};
pub use policy::GaussianPolicy;
pub use trainer::{
    action_bounds_for, actor_objective, actor_update, perturb_state, perturb_states, pretrain_for, train,
    train_with_dasp, train_without_density_term, ActorObjective, ActorTerms, DensityTerm, MetricsRow, StepRngs,
    TrainOutput,
};
