//! Flat parameter views shared by the optimizer, checkpoints and gradient checks.

use crate::error::{check_len, Result};

/// A named, shaped, read-only view of one parameter array.
#[derive(Debug, Clone)]
pub struct ParamBlock<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// Anything that owns trainable arrays. `blocks` and `blocks_mut` must enumerate the same
/// arrays in the same order.
pub trait Parameters {
    fn blocks(&self) -> Vec<ParamBlock<'_>>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|b| b.data.iter().copied()).collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        check_len("flat parameter vector", self.num_params(), flat.len())?;
        let mut offset = 0;
        for block in self.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient arrays laid out block-for-block like [`Parameters::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn new(blocks: Vec<Vec<f64>>) -> Self {
        Self { blocks }
    }

    pub fn zeros_like<P: Parameters + ?Sized>(params: &P) -> Self {
        Self { blocks: params.blocks().iter().map(|b| vec![0.0; b.data.len()]).collect() }
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        self.blocks
    }

    pub fn concat(parts: impl IntoIterator<Item = Gradients>) -> Self {
        Self { blocks: parts.into_iter().flat_map(|g| g.blocks).collect() }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.blocks.iter_mut().flatten() {
            *v *= k;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.blocks.len(), other.blocks.len(), "gradient layouts differ");
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}
