//! Desk-scale control environment, scripted data collection, pushes and a KDE oracle.

pub mod dataset;
pub mod kde;
pub mod pointmass;
pub mod push;

pub use dataset::{generate_dataset, Batch, Dataset, DatasetMeta, Source, Tier, Transition};
pub use kde::KdeOracle;
pub use pointmass::{PdController, PointMassConfig, PointMassEnv, Step, ACTION_DIM, STATE_DIM};
pub use push::{apply_push, PushLevel, PushSpec};
