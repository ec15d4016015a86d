//! Seeded random streams.
//!
//! Every stochastic component in the crate draws from a [`SeededRng`]. Independent consumers
//! (minibatch sampling, perturbations, policy noise, ...) get their own substream derived from
//! the run seed, so removing one consumer never shifts the numbers another one sees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Independent stream keyed by `(seed, tag)`.
    pub fn substream(seed: u64, tag: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(tag.wrapping_add(1));
        Self { seed, inner }
    }

    /// Forks a child stream from the current state; advances `self` by one draw.
    pub fn fork(&mut self) -> Self {
        let child_seed = self.inner.next_u64();
        Self::new(child_seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// `n` independent standard-normal draws.
    pub fn sample_standard_normal(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.standard_normal()
    }

    /// Uniform on `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.inner.random::<f64>()
    }

    pub fn unit(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = SeededRng::new(42).sample_standard_normal(64);
        let b = SeededRng::new(42).sample_standard_normal(64);
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = SeededRng::new(1).sample_standard_normal(16);
        let b = SeededRng::new(2).sample_standard_normal(16);
        assert_ne!(a, b);
    }

    #[test]
    fn substreams_are_independent_of_each_other() {
        let a = SeededRng::substream(5, 0).sample_standard_normal(8);
        let b = SeededRng::substream(5, 1).sample_standard_normal(8);
        let a2 = SeededRng::substream(5, 0).sample_standard_normal(8);
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn million_draws_have_unit_moments() {
        let n = 1_000_000;
        let xs = SeededRng::new(2024).sample_standard_normal(n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }
}
