//! Mini-batch gradient training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax, Activation, ActivationTrace, LayeredNetwork, Readout};
use crate::error::{Error, Result};

const MOMENTUM: f64 = 0.9;

/// Flattened inputs with integer class labels.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::dims("dataset labels", inputs.len(), labels.len()));
        }
        if let Some(first) = inputs.first() {
            if let Some(bad) = inputs.iter().position(|x| x.len() != first.len()) {
                return Err(Error::InvalidInput(format!(
                    "sample {bad} has {} features, expected {}",
                    inputs[bad].len(),
                    first.len()
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {classes})"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// Fraction of samples whose argmax logit equals the label.
    pub fn accuracy(&self, net: &LayeredNetwork) -> Result<f64> {
        if self.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            if argmax(&net.logits(x)?) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / self.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    VaeElbo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub loss: LossKind,
    /// Rescale the batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl TrainConfig {
    pub fn classifier_default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
            loss: LossKind::CrossEntropy,
            clip_norm: Some(5.0),
        }
    }

    pub fn vae_default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 60,
            seed: 0,
            optimizer: Optimizer::SgdMomentum,
            loss: LossKind::VaeElbo,
            clip_norm: Some(20.0),
        }
    }

    /// Zero epochs is accepted and yields the seeded initialization.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::InvalidConfig("clip norm must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &LayeredNetwork) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.biases().len()]).collect(),
        }
    }

    /// Same order as [`LayeredNetwork::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights
            .iter()
            .chain(&self.biases)
            .flat_map(|v| v.iter())
            .map(|g| g * g)
            .sum()
    }
}

/// Back-propagates `grad_out` (the loss gradient w.r.t. the last layer's
/// post-activation) through `trace`, accumulating into `grads`. Returns the
/// gradient w.r.t. the network input.
pub fn backward(
    net: &LayeredNetwork,
    trace: &ActivationTrace,
    grad_out: &[f64],
    grads: &mut Gradients,
) -> Vec<f64> {
    let mut delta = grad_out.to_vec();
    for (k, layer) in net.layers().iter().enumerate().rev() {
        let pre = &trace.pre[k];
        let input = &trace.inputs[k];
        let act = layer.activation();
        if act != Activation::Identity {
            for (d, &z) in delta.iter_mut().zip(pre) {
                *d *= act.derivative(z);
            }
        }
        let n_in = layer.n_in();
        let gw = &mut grads.weights[k];
        let gb = &mut grads.biases[k];
        let mut next = vec![0.0; n_in];
        for (j, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[j] += d;
            let row_g = &mut gw[j * n_in..(j + 1) * n_in];
            for (g, &a) in row_g.iter_mut().zip(input) {
                *g += d * a;
            }
            for (n, &w) in next.iter_mut().zip(layer.row(j)) {
                *n += d * w;
            }
        }
        delta = next;
    }
    delta
}

/// Mean softmax cross-entropy over the batch and its parameter gradient.
pub fn classifier_loss_and_gradient(
    net: &LayeredNetwork,
    inputs: &[Vec<f64>],
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let trace = net.forward(x)?;
        loss += cross_entropy(&trace.logits, y);
        let mut g = softmax(&trace.logits);
        g[y] -= 1.0;
        backward(net, &trace, &g, &mut grads);
    }
    let n = inputs.len().max(1) as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// `-log softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

fn mean_cross_entropy(net: &LayeredNetwork, data: &Dataset) -> Result<f64> {
    let mut loss = 0.0;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        loss += cross_entropy(&net.logits(x)?, y);
    }
    Ok(loss / data.len() as f64)
}

/// Plain or momentum SGD state for one network.
#[derive(Debug)]
pub(crate) struct OptimizerState {
    kind: Optimizer,
    velocity: Option<Vec<f64>>,
}

impl OptimizerState {
    pub(crate) fn new(kind: Optimizer) -> Self {
        Self {
            kind,
            velocity: None,
        }
    }

    pub(crate) fn step(&mut self, net: &mut LayeredNetwork, grads: &Gradients, lr: f64) {
        let g = grads.flatten();
        let mut params = net.parameters();
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&g) {
                    *p -= lr * g;
                }
            }
            Optimizer::SgdMomentum => {
                let v = self.velocity.get_or_insert_with(|| vec![0.0; g.len()]);
                for ((p, v), g) in params.iter_mut().zip(v.iter_mut()).zip(&g) {
                    *v = MOMENTUM * *v + g;
                    *p -= lr * *v;
                }
            }
        }
        net.set_parameters(&params).expect("gradient layout matches network");
    }
}

/// Scale factor bringing a gradient of squared norm `sq` under `clip`.
pub(crate) fn clip_factor(sq: f64, clip: Option<f64>) -> f64 {
    match clip {
        Some(c) if sq.sqrt() > c => c / sq.sqrt(),
        _ => 1.0,
    }
}

/// Trained network plus the full-dataset loss before training and after each epoch.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: LayeredNetwork,
    pub initial_loss: f64,
    pub epoch_losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

/// Trains a ReLU MLP with identity output and logits readout.
pub fn train_classifier(data: &Dataset, arch: &[usize], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.loss != LossKind::CrossEntropy {
        return Err(Error::InvalidConfig(
            "classifier training requires the cross-entropy loss".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if arch.first() != Some(&data.dim()) {
        return Err(Error::dims("architecture input", data.dim(), arch.first().copied().unwrap_or(0)));
    }
    if arch.last() != Some(&data.classes) {
        return Err(Error::dims("architecture output", data.classes, arch.last().copied().unwrap_or(0)));
    }

    let mut net = LayeredNetwork::random(
        arch,
        Activation::Relu,
        Activation::Identity,
        Readout::Logits,
        cfg.seed,
    )?;
    let initial_loss = mean_cross_entropy(&net, data)?;
    if !initial_loss.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            loss: initial_loss,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt = OptimizerState::new(cfg.optimizer);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut batch_x = Vec::with_capacity(cfg.batch_size);
    let mut batch_y = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(data.inputs[i].clone());
                batch_y.push(data.labels[i]);
            }
            let (loss, mut grads) = classifier_loss_and_gradient(&net, &batch_x, &batch_y)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            grads.scale(clip_factor(grads.squared_norm(), cfg.clip_norm));
            opt.step(&mut net, &grads, cfg.learning_rate);
        }
        let loss = mean_cross_entropy(&net, data).unwrap_or(f64::NAN);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        epoch_losses.push(loss);
    }

    Ok(TrainOutcome {
        network: net,
        initial_loss,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let center = if label == 0 { -2.0 } else { 2.0 };
            inputs.push((0..4).map(|_| center + noise.sample(&mut rng)).collect());
            labels.push(label);
        }
        Dataset::new(inputs, labels, 2).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 3);
        let cfg = TrainConfig {
            epochs: 20,
            ..TrainConfig::classifier_default()
        };
        let out = train_classifier(&data, &[4, 2], &cfg).unwrap();
        assert!(data.accuracy(&out.network).unwrap() >= 0.99);
        assert!(out.final_loss() <= out.initial_loss * 1.05);
    }

    #[test]
    fn zero_epochs_returns_seeded_initialization() {
        let data = blobs(10, 1);
        let cfg = TrainConfig {
            epochs: 0,
            seed: 11,
            ..TrainConfig::classifier_default()
        };
        let out = train_classifier(&data, &[4, 3, 2], &cfg).unwrap();
        let init = LayeredNetwork::random(
            &[4, 3, 2],
            Activation::Relu,
            Activation::Identity,
            Readout::Logits,
            11,
        )
        .unwrap();
        assert_eq!(out.network, init);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(64, 5);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 9,
            ..TrainConfig::classifier_default()
        };
        let a = train_classifier(&data, &[4, 8, 2], &cfg).unwrap();
        let b = train_classifier(&data, &[4, 8, 2], &cfg).unwrap();
        assert_eq!(a.network.parameters(), b.network.parameters());
    }

    #[test]
    fn rejects_empty_dataset_and_bad_labels() {
        let empty = Dataset::new(vec![], vec![], 2).unwrap();
        let cfg = TrainConfig::classifier_default();
        assert!(train_classifier(&empty, &[4, 2], &cfg).is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![2], 2).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let mut data = blobs(32, 2);
        for x in &mut data.inputs {
            x.iter_mut().for_each(|v| *v *= 1e150);
        }
        let cfg = TrainConfig {
            learning_rate: 1e200,
            clip_norm: None,
            epochs: 5,
            ..TrainConfig::classifier_default()
        };
        let err = train_classifier(&data, &[4, 8, 2], &cfg).unwrap_err();
        assert!(err.is_numeric(), "{err}");
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..5u64 {
            let sizes = [5, 7, 6, 3];
            let net = LayeredNetwork::random(
                &sizes,
                Activation::Relu,
                Activation::Identity,
                Readout::Logits,
                trial,
            )
            .unwrap();
            let inputs: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let labels: Vec<usize> = (0..4).map(|i| i % 3).collect();
            let (_, grads) = classifier_loss_and_gradient(&net, &inputs, &labels).unwrap();
            let analytic = grads.flatten();
            let params = net.parameters();
            let h = 1e-5;
            for (idx, &g) in analytic.iter().enumerate() {
                let mut probe = net.clone();
                let mut p = params.clone();
                p[idx] += h;
                probe.set_parameters(&p).unwrap();
                let (up, _) = classifier_loss_and_gradient(&probe, &inputs, &labels).unwrap();
                p[idx] -= 2.0 * h;
                probe.set_parameters(&p).unwrap();
                let (down, _) = classifier_loss_and_gradient(&probe, &inputs, &labels).unwrap();
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    rel_err(g, numeric) < 1e-4,
                    "param {idx}: analytic {g} numeric {numeric}"
                );
            }
        }
    }
}
