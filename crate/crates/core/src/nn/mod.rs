//! Numeric substrate: dense networks with analytic gradients, Adam, seeded sampling and
//! parameter checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod params;
pub mod rng;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use mlp::{Activation, Dense, Mlp, MlpTrace};
pub use params::{Gradients, ParamBlock, Parameters};
pub use rng::SeededRng;

/// Free-function form of [`Mlp::forward`].
pub fn mlp_forward(net: &Mlp, x: &[f64]) -> crate::Result<Vec<f64>> {
    net.forward(x)
}

/// Free-function form of [`Mlp::backward`].
pub fn mlp_backward(net: &Mlp, x: &[f64], grad_out: &[f64]) -> crate::Result<(Gradients, Vec<f64>)> {
    net.backward(x, grad_out)
}

/// `n` standard-normal draws from `rng`.
pub fn sample_standard_normal(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    rng.sample_standard_normal(n)
}
