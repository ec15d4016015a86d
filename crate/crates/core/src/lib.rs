//! Density-aware actor regularization for offline reinforcement learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense networks with hand-written backpropagation, Adam and seeded sampling.
//! - [`density`]: the one-step-forward variational density model (two Gaussian encoders and a
//!   decoder), its three-term loss and the clipped density score used as a regularizer.
//! - [`agent`]: a Q-ensemble actor-critic whose actor objective adds the density score at
//!   Gaussian-perturbed states.
//! - [`env`]: a 2-D point-mass environment, scripted behavior policies, dataset generation,
//!   push perturbations and a kernel-density oracle.
//! - [`eval`]: normalized-return evaluation, push recovery, validity analysis and the α sweep.
//!
//! The `book/` directory next to the workspace root explains the math behind each piece; its
//! code listings are compiled and run as doc-tests of this crate.

pub mod agent;
pub mod density;
pub mod env;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/density-model.md")]
    mod density_model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
