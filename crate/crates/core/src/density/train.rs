//! Minibatch pretraining of the density model.

use ndarray::Array2;

use crate::density::model::{DaspLossBreakdown, DaspModel};
use crate::env::Dataset;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaspTrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for DaspTrainConfig {
    fn default() -> Self {
        Self { epochs: 200, steps_per_epoch: 20, batch_size: 256, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: DaspLossBreakdown,
}

/// Minimizes the mean density loss over random minibatches with Adam.
///
/// Returns the trained model and the mean loss breakdown of every epoch.
pub fn pretrain_dasp(
    mut model: DaspModel,
    data: &Dataset,
    config: &DaspTrainConfig,
    rng: &mut SeededRng,
) -> Result<(DaspModel, Vec<EpochLoss>)> {
    if data.is_empty() {
        return Err(Error::Config("cannot pretrain on an empty dataset".into()));
    }
    if config.batch_size == 0 || config.steps_per_epoch == 0 {
        return Err(Error::Config("batch size and steps per epoch must be positive".into()));
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &model);
    let k = model.latent_dim();
    let mut curve = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut mean = DaspLossBreakdown::zero();
        for _ in 0..config.steps_per_epoch {
            let batch = data.sample_batch(config.batch_size, rng);
            let eps = Array2::from_shape_fn((config.batch_size, k), |_| rng.standard_normal());
            let tape =
                model.loss_forward(batch.states.view(), batch.actions.view(), batch.next_states.view(), eps.view())?;
            let w = 1.0 / config.batch_size as f64;
            let mut step_mean = DaspLossBreakdown::zero();
            for t in &tape.terms {
                step_mean.accumulate(t, w);
            }
            if !step_mean.total.is_finite() {
                return Err(Error::NumericFault(format!("density loss at epoch {epoch}")));
            }
            let (grads, _) = model.loss_backward(&tape, &vec![w; config.batch_size])?;
            adam.step(&mut model, &grads)?;
            mean.accumulate(&step_mean, 1.0 / config.steps_per_epoch as f64);
        }
        curve.push(EpochLoss { epoch, loss: mean });
    }
    Ok((model, curve))
}

/// Mean loss of `model` over the whole dataset with one latent draw per transition.
pub fn mean_dataset_loss(model: &DaspModel, data: &Dataset, rng: &mut SeededRng) -> Result<DaspLossBreakdown> {
    let eps = Array2::from_shape_fn((data.len(), model.latent_dim()), |_| rng.standard_normal());
    let tape = model.loss_forward(data.states.view(), data.actions.view(), data.next_states.view(), eps.view())?;
    let mut mean = DaspLossBreakdown::zero();
    for t in &tape.terms {
        mean.accumulate(t, 1.0 / data.len() as f64);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_dataset, PointMassEnv, Tier};
    use crate::nn::Parameters;

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = generate_dataset(&PointMassEnv::default(), Tier::Medium, 500, 1).unwrap();
        let model = DaspModel::new(4, 2, 4, 16, &mut SeededRng::new(0));
        let cfg = DaspTrainConfig { epochs: 1, steps_per_epoch: 1, batch_size: 32, lr: 0.0 };
        let (trained, curve) = pretrain_dasp(model.clone(), &data, &cfg, &mut SeededRng::new(1)).unwrap();
        assert_eq!(trained.flat_params(), model.flat_params());
        assert_eq!(curve.len(), 1);
    }

    #[test]
    fn equal_seeds_give_identical_models() {
        let data = generate_dataset(&PointMassEnv::default(), Tier::Medium, 500, 1).unwrap();
        let cfg = DaspTrainConfig { epochs: 3, steps_per_epoch: 5, batch_size: 32, lr: 1e-3 };
        let run = || {
            let model = DaspModel::new(4, 2, 4, 16, &mut SeededRng::new(0));
            pretrain_dasp(model, &data, &cfg, &mut SeededRng::new(9)).unwrap()
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
    }
}
