//! Most-relevant-first perturbation curves and AOPC.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::stream_seed;
use crate::error::{Error, Result};
use crate::mlf::{MlfAutoencoder, MlfKind};
use crate::nn::{argmax, softmax, LayeredNetwork};
use crate::segmentation::Partition;
use crate::tensor::Tensor;
use crate::vae::standard_normal;

/// Replacement values for flipped segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Fill {
    /// Uniform noise over `[low, high)`, drawn once per seed for the whole image.
    Noise { low: f64, high: f64 },
    Zeros,
    /// Per-channel image mean.
    Mean,
}

impl Default for Fill {
    fn default() -> Self {
        Fill::Noise { low: 0.0, high: 1.0 }
    }
}

/// Something whose units can be knocked out in a given order.
pub trait Perturbation {
    fn units(&self) -> usize;

    /// Classifier input with the first `k` units of `ordering` perturbed.
    fn apply(&self, ordering: &[usize], k: usize) -> Result<Vec<f64>>;

    fn seed(&self) -> u64;
}

fn check_ordering(ordering: &[usize], units: usize, k: usize) -> Result<()> {
    if k > ordering.len() {
        return Err(Error::InvalidInput(format!(
            "step {k} exceeds ordering length {}",
            ordering.len()
        )));
    }
    if let Some(&bad) = ordering[..k].iter().find(|&&u| u >= units) {
        return Err(Error::InvalidInput(format!("unit {bad} out of range (have {units})")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SegmentPerturbation {
    image: Vec<f64>,
    replacement: Vec<f64>,
    members: Vec<Vec<usize>>,
    channels: usize,
    seed: u64,
}

impl SegmentPerturbation {
    pub fn new(image: &Tensor, partition: &Partition, fill: Fill, seed: u64) -> Result<Self> {
        let (h, w, channels) = image.image_dims()?;
        if partition.height != h || partition.width != w {
            return Err(Error::InvalidInput(format!(
                "partition is {}x{} but the image is {h}x{w}",
                partition.height, partition.width
            )));
        }
        let x = image.data();
        let replacement = match fill {
            Fill::Zeros => vec![0.0; x.len()],
            Fill::Mean => {
                let n = (h * w) as f64;
                let means: Vec<f64> = (0..channels)
                    .map(|c| x.iter().skip(c).step_by(channels).sum::<f64>() / n)
                    .collect();
                (0..x.len()).map(|i| means[i % channels]).collect()
            }
            Fill::Noise { low, high } => {
                if !(low < high && low.is_finite() && high.is_finite()) {
                    return Err(Error::InvalidConfig(format!("bad noise range [{low}, {high})")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..x.len()).map(|_| rng.random_range(low..high)).collect()
            }
        };
        Ok(Self {
            image: x.to_vec(),
            replacement,
            members: partition.members(),
            channels,
            seed,
        })
    }
}

impl Perturbation for SegmentPerturbation {
    fn units(&self) -> usize {
        self.members.len()
    }

    fn apply(&self, ordering: &[usize], k: usize) -> Result<Vec<f64>> {
        check_ordering(ordering, self.units(), k)?;
        let mut out = self.image.clone();
        for &segment in &ordering[..k] {
            for &p in &self.members[segment] {
                let base = p * self.channels;
                out[base..base + self.channels]
                    .copy_from_slice(&self.replacement[base..base + self.channels]);
            }
        }
        Ok(out)
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn perturb_segments(
    image: &Tensor,
    partition: &Partition,
    ordering: &[usize],
    k: usize,
    fill: Fill,
    seed: u64,
) -> Result<Tensor> {
    let data = SegmentPerturbation::new(image, partition, fill, seed)?.apply(ordering, k)?;
    Tensor::new(image.shape().to_vec(), data)
}

/// Latents replaced by draws from the N(0, 1) prior, then decoded with the residual.
#[derive(Clone, Debug)]
pub struct LatentPerturbation {
    decoder: LayeredNetwork,
    residual: Vec<f64>,
    h: Vec<f64>,
    prior: Vec<f64>,
    seed: u64,
}

impl LatentPerturbation {
    pub fn new(ae: &MlfAutoencoder, h: &[f64], seed: u64) -> Result<Self> {
        if ae.kind != MlfKind::Vae {
            return Err(Error::InvalidInput("latent perturbation needs a vae autoencoder".into()));
        }
        if h.len() != ae.decoder.input_dim() {
            return Err(Error::dims("latent code", ae.decoder.input_dim(), h.len()));
        }
        Ok(Self {
            decoder: ae.decoder.clone(),
            residual: ae.residual.clone(),
            h: h.to_vec(),
            prior: standard_normal(h.len(), seed),
            seed,
        })
    }
}

impl Perturbation for LatentPerturbation {
    fn units(&self) -> usize {
        self.h.len()
    }

    fn apply(&self, ordering: &[usize], k: usize) -> Result<Vec<f64>> {
        check_ordering(ordering, self.units(), k)?;
        let mut h = self.h.clone();
        for &i in &ordering[..k] {
            h[i] = self.prior[i];
        }
        let mut x = self.decoder.logits(&h)?;
        for (v, r) in x.iter_mut().zip(&self.residual) {
            *v += r;
        }
        Ok(x)
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

pub fn perturb_latents(
    ae: &MlfAutoencoder,
    h: &[f64],
    ordering: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    LatentPerturbation::new(ae, h, seed)?.apply(ordering, k)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorfResult {
    /// Probability of the originally predicted class after `k` flips.
    pub scores: Vec<f64>,
    pub steps: usize,
    pub ordering: Vec<usize>,
    pub aopc: f64,
    pub seed: u64,
}

impl MorfResult {
    /// Extends the curve to `steps` by repeating its last score.
    pub fn padded(&self, steps: usize) -> MorfResult {
        let mut scores = self.scores.clone();
        let last = *scores.last().expect("curve has at least one score");
        scores.resize(scores.len().max(steps + 1), last);
        let aopc = aopc(&scores).expect("nonempty");
        MorfResult {
            steps: scores.len() - 1,
            scores,
            ordering: self.ordering.clone(),
            aopc,
            seed: self.seed,
        }
    }
}

pub fn aopc(scores: &[f64]) -> Result<f64> {
    let first = *scores
        .first()
        .ok_or_else(|| Error::InvalidInput("aopc needs at least one score".into()))?;
    Ok(scores.iter().map(|s| first - s).sum::<f64>() / scores.len() as f64)
}

fn class_probability(model: &LayeredNetwork, x: &[f64], class: usize) -> Result<f64> {
    Ok(softmax(&model.logits(x)?)[class])
}

pub fn morf_curve(
    model: &LayeredNetwork,
    image: &[f64],
    perturbation: &dyn Perturbation,
    ordering: &[usize],
    steps: usize,
) -> Result<MorfResult> {
    if steps > perturbation.units() || steps > ordering.len() {
        return Err(Error::InvalidInput(format!(
            "{steps} steps requested but only {} units can be flipped",
            perturbation.units().min(ordering.len())
        )));
    }
    let logits = model.logits(image)?;
    let class = argmax(&logits);
    let mut scores = Vec::with_capacity(steps + 1);
    scores.push(softmax(&logits)[class]);
    for k in 1..=steps {
        scores.push(class_probability(model, &perturbation.apply(ordering, k)?, class)?);
    }
    let aopc = aopc(&scores)?;
    Ok(MorfResult {
        scores,
        steps,
        ordering: ordering.to_vec(),
        aopc,
        seed: perturbation.seed(),
    })
}

/// Pointwise mean curve and the mean AOPC of every curve prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub mean_scores: Vec<f64>,
    pub aopc_per_step: Vec<f64>,
}

impl MeanCurve {
    pub fn mean_aopc(&self) -> f64 {
        *self.aopc_per_step.last().expect("curve has at least one step")
    }
}

pub fn aopc_mean(results: &[MorfResult]) -> Result<MeanCurve> {
    let first = results
        .first()
        .ok_or_else(|| Error::InvalidInput("no curves to average".into()))?;
    let len = first.scores.len();
    if let Some(bad) = results.iter().find(|r| r.scores.len() != len) {
        return Err(Error::InvalidInput(format!(
            "curves have different step counts ({} and {})",
            first.steps, bad.steps
        )));
    }
    let n = results.len() as f64;
    let mean_scores = (0..len)
        .map(|k| results.iter().map(|r| r.scores[k]).sum::<f64>() / n)
        .collect();
    let mut aopc_per_step = Vec::with_capacity(len);
    for l in 0..len {
        let mut total = 0.0;
        for r in results {
            total += aopc(&r.scores[..=l])?;
        }
        aopc_per_step.push(total / n);
    }
    Ok(MeanCurve {
        mean_scores,
        aopc_per_step,
    })
}

/// A seeded uniform permutation of `0..units`.
pub fn random_order(units: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..units).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Mean curve over `trials` random orderings; trial `t` shuffles with
/// `stream_seed(seed, 0, t)`.
pub fn random_baseline(
    model: &LayeredNetwork,
    image: &[f64],
    perturbation: &dyn Perturbation,
    steps: usize,
    trials: usize,
    seed: u64,
) -> Result<MorfResult> {
    if trials == 0 {
        return Err(Error::InvalidInput("random baseline needs at least one trial".into()));
    }
    let mut sum = vec![0.0; steps + 1];
    for t in 0..trials {
        let order = random_order(perturbation.units(), stream_seed(seed, 0, t as u64));
        let r = morf_curve(model, image, perturbation, &order, steps)?;
        for (s, v) in sum.iter_mut().zip(&r.scores) {
            *s += v;
        }
    }
    let scores: Vec<f64> = sum.iter().map(|s| s / trials as f64).collect();
    let aopc = aopc(&scores)?;
    Ok(MorfResult {
        scores,
        steps,
        ordering: Vec::new(),
        aopc,
        seed,
    })
}
