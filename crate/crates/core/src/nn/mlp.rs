//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! A network is a stack of affine layers `y = act(W x + b)` with weights stored row-major as
//! `(out_dim, in_dim)`. Batched calls take one sample per row. The single-sample methods
//! ([`Mlp::forward`], [`Mlp::backward`]) are thin wrappers over a batch of one.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{check_len, Error, Result};
use crate::nn::params::{Gradients, ParamBlock, Parameters};
use crate::nn::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { weight: Array2::zeros((out_dim, in_dim)), bias: Array1::zeros(out_dim), activation }
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Array2::from_shape_fn((out_dim, in_dim), |_| rng.uniform(-limit, limit));
        Self { weight, bias: Array1::zeros(out_dim), activation }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations recorded by [`Mlp::forward_batch`]; `values[0]` is the input and
/// `values[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    values: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.values.last().expect("trace always holds the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.values[0]
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len("mlp layer chain", pair[0].out_dim(), pair[1].in_dim())?;
        }
        for layer in &layers {
            check_len("mlp bias", layer.out_dim(), layer.bias.len())?;
        }
        Ok(Self { layers })
    }

    /// ReLU hidden layers, identity output, Glorot-uniform init. `dims = [in, h1, ..., out]`.
    pub fn new(dims: &[usize], rng: &mut SeededRng) -> Self {
        Self::build(dims, |i, o, act| Dense::glorot(i, o, act, rng))
    }

    /// Same layout as [`Mlp::new`] with every parameter zero.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::build(dims, Dense::zeros)
    }

    fn build(dims: &[usize], mut make: impl FnMut(usize, usize, Activation) -> Dense) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                make(dims[i], dims[i + 1], act)
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), x.len())?;
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        Ok(self.predict_batch(view)?.iter().copied().collect())
    }

    /// Gradients of `<grad_out, forward(x)>` with respect to every parameter and to `x`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        check_len("mlp input", self.input_dim(), x.len())?;
        check_len("mlp upstream gradient", self.output_dim(), grad_out.len())?;
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        let gv = ArrayView2::from_shape((1, grad_out.len()), grad_out).expect("contiguous slice");
        let trace = self.forward_batch(xv)?;
        let (grads, gin) = self.backward_batch(&trace, gv)?;
        Ok((grads, gin.iter().copied().collect()))
    }

    /// Forward pass without keeping intermediate activations.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_len("mlp input", self.input_dim(), x.ncols())?;
        let mut h = self.affine(0, x);
        for i in 1..self.layers.len() {
            h = self.affine(i, h.view());
        }
        Ok(h)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<MlpTrace> {
        check_len("mlp input", self.input_dim(), x.ncols())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_owned());
        for i in 0..self.layers.len() {
            let next = self.affine(i, values[i].view());
            values.push(next);
        }
        Ok(MlpTrace { values })
    }

    fn affine(&self, i: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let layer = &self.layers[i];
        let mut z = x.dot(&layer.weight.t());
        z += &layer.bias;
        layer.activation.apply(&mut z);
        z
    }

    /// Backpropagates `grad_out` (one row per sample) through a recorded pass. Parameter
    /// gradients are summed over the batch.
    pub fn backward_batch(&self, trace: &MlpTrace, grad_out: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        check_len("mlp upstream gradient", self.output_dim(), grad_out.ncols())?;
        check_len("mlp upstream batch", trace.output().nrows(), grad_out.nrows())?;
        let mut blocks = vec![Vec::new(); 2 * self.layers.len()];
        let mut g = grad_out.to_owned();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if layer.activation == Activation::Relu {
                ndarray::Zip::from(&mut g).and(&trace.values[i + 1]).for_each(|gv, &out| {
                    if out <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            let dw = g.t().dot(&trace.values[i]);
            let db = g.sum_axis(Axis(0));
            blocks[2 * i] = dw.iter().copied().collect();
            blocks[2 * i + 1] = db.to_vec();
            g = g.dot(&layer.weight);
        }
        Ok((Gradients::new(blocks), g))
    }
}

impl Parameters for Mlp {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            out.push(ParamBlock {
                name: format!("layer{i}.weight"),
                shape: vec![layer.out_dim(), layer.in_dim()],
                data: layer.weight.as_slice().expect("standard layout"),
            });
            out.push(ParamBlock {
                name: format!("layer{i}.bias"),
                shape: vec![layer.out_dim()],
                data: layer.bias.as_slice().expect("standard layout"),
            });
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for layer in &mut self.layers {
            out.push(layer.weight.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }
}
