//! Variational one-step-forward density model and the clipped density score.

pub mod gaussian;
pub mod model;
pub mod score;
pub mod train;

pub use gaussian::{kl_diag_gaussian, DiagGaussian};
pub use model::{DaspLossBreakdown, DaspModel, LossInputGrads, LossTape, PredictTape};
pub use score::{clip_score, ScoreBatch, ScoreConfig};
pub use train::{mean_dataset_loss, pretrain_dasp, DaspTrainConfig, EpochLoss};
