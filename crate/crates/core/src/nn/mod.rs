//! Dense layered networks: representation, forward pass, training and persistence.
//!
//! Every network in the toolkit (classifiers, decoders, VAE halves and the
//! composite decoder+classifier stacks) is a [`LayeredNetwork`]: an ordered
//! list of affine layers, each followed by an identity or ReLU activation,
//! with an optional softmax readout on top of the final layer.

mod io;
pub(crate) mod train;

pub use io::{
    load_model, save_model, LayerSpec, ModelFile, NetworkSpec, VaeSection, MODEL_FORMAT_VERSION,
};
pub use train::{
    backward, classifier_loss_and_gradient, cross_entropy, train_classifier, Dataset, Gradients, LossKind,
    Optimizer, TrainConfig, TrainOutcome,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ensure_finite;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Logits,
    Softmax,
}

/// Affine map `activation(W a + b)` with `W` stored row-major as `[n_out x n_in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        n_in: usize,
        n_out: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidInput(format!(
                "layer dimensions must be positive, got {n_out}x{n_in}"
            )));
        }
        if weights.len() != n_in * n_out {
            return Err(Error::dims("layer weights", n_in * n_out, weights.len()));
        }
        if biases.len() != n_out {
            return Err(Error::dims("layer biases", n_out, biases.len()));
        }
        ensure_finite(&weights, "layer weights")?;
        ensure_finite(&biases, "layer biases")?;
        Ok(Self {
            n_in,
            n_out,
            weights,
            biases,
            activation,
        })
    }

    /// Build from nested rows `weights[j][i]`.
    pub fn from_rows(rows: &[Vec<f64>], biases: Vec<f64>, activation: Activation) -> Result<Self> {
        let n_out = rows.len();
        let n_in = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_in) {
            return Err(Error::InvalidInput("ragged weight rows".into()));
        }
        Self::new(n_in, n_out, rows.concat(), biases, activation)
    }

    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
            activation,
        }
    }

    /// Uniform(-a, a) weights with `a = sqrt(6 / (n_in + n_out))`, zero biases.
    pub fn glorot<R: Rng>(n_in: usize, n_out: usize, activation: Activation, rng: &mut R) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        let weights = (0..n_in * n_out)
            .map(|_| rng.random_range(-a..a))
            .collect();
        Self {
            n_in,
            n_out,
            weights,
            biases: vec![0.0; n_out],
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.n_in..(j + 1) * self.n_in]
    }

    #[inline]
    pub fn weight(&self, j: usize, i: usize) -> f64 {
        self.weights[j * self.n_in + i]
    }

    /// Adds `delta` to the biases.
    pub fn with_bias_offset(mut self, delta: &[f64]) -> Result<Self> {
        if delta.len() != self.n_out {
            return Err(Error::dims("bias offset", self.n_out, delta.len()));
        }
        for (b, d) in self.biases.iter_mut().zip(delta) {
            *b += d;
        }
        ensure_finite(&self.biases, "bias offset")?;
        Ok(self)
    }

    pub fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.n_in);
        (0..self.n_out)
            .map(|j| {
                self.row(j)
                    .iter()
                    .zip(input)
                    .fold(self.biases[j], |acc, (w, a)| acc + w * a)
            })
            .collect()
    }
}

/// Per-layer record of a forward pass. `inputs[k]` feeds layer `k`,
/// `pre[k]` is its pre-activation, and `inputs[k + 1]` its activation.
#[derive(Clone, Debug)]
pub struct ActivationTrace {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// Post-activation of the last layer, before any softmax.
    pub logits: Vec<f64>,
    /// What the network returns: logits, or their softmax.
    pub output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayeredNetwork {
    layers: Vec<DenseLayer>,
    readout: Readout,
}

impl LayeredNetwork {
    pub fn new(layers: Vec<DenseLayer>, readout: Readout) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::InvalidInput(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].n_out,
                    k + 1,
                    pair[1].n_in
                )));
            }
        }
        Ok(Self { layers, readout })
    }

    /// Single identity layer with unit weights and zero bias.
    pub fn identity(dim: usize) -> Self {
        let mut layer = DenseLayer::zeros(dim, dim, Activation::Identity);
        for i in 0..dim {
            layer.weights[i * dim + i] = 1.0;
        }
        Self {
            layers: vec![layer],
            readout: Readout::Logits,
        }
    }

    /// Seeded Glorot-initialized MLP over `sizes = [input, hidden.., output]`.
    pub fn random(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        readout: Readout,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(sizes, hidden, output, readout, &mut rng)
    }

    pub fn random_with<R: Rng>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        readout: Readout,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "architecture {sizes:?} needs at least two positive sizes"
            )));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let act = if k == last { output } else { hidden };
                DenseLayer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Self::new(layers, readout)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<DenseLayer> {
        self.layers
    }

    pub fn readout(&self) -> Readout {
        self.readout
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `other ∘ self`: feeds this network's output into `other`. The readout is `other`'s.
    pub fn then(&self, other: &LayeredNetwork) -> Result<LayeredNetwork> {
        if self.output_dim() != other.input_dim() {
            return Err(Error::dims(
                "network concatenation",
                other.input_dim(),
                self.output_dim(),
            ));
        }
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        Self::new(layers, other.readout)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ActivationTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("network input", self.input_dim(), x.len()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.pre_activation(inputs.last().expect("nonempty"));
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            inputs.push(a);
        }
        let logits = inputs.pop().expect("nonempty");
        ensure_finite(&logits, "forward pass")?;
        let output = match self.readout {
            Readout::Logits => logits.clone(),
            Readout::Softmax => softmax(&logits),
        };
        Ok(ActivationTrace {
            inputs,
            pre,
            logits,
            output,
        })
    }

    /// Final-layer activations (softmax bypassed).
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    /// Softmax of the logits, regardless of readout.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::dims("parameter vector", self.parameter_count(), params.len()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
