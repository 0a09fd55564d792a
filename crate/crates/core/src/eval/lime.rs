//! Superpixel surrogate baseline: random segment masks, kernel-weighted ridge fit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::morf::{Fill, Perturbation, SegmentPerturbation};
use super::stream_seed;
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, LayeredNetwork};
use crate::segmentation::Partition;
use crate::tensor::Tensor;

const MAX_ATTEMPTS: usize = 3;
const MAX_EXHAUSTIVE_UNITS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge: f64,
    pub seed: u64,
    pub fill: Fill,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: 0.25,
            ridge: 1.0,
            seed: 0,
            fill: Fill::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSampling {
    Random { n_samples: usize, seed: u64 },
    /// Every mask in `{0, 1}^m`.
    Exhaustive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimeExplanation {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge: f64,
    pub seed: u64,
}

fn sample_masks(m: usize, sampling: MaskSampling, attempt: usize) -> Vec<Vec<bool>> {
    match sampling {
        MaskSampling::Exhaustive => (0..1usize << m)
            .map(|bits| (0..m).map(|i| bits >> i & 1 == 1).collect())
            .collect(),
        MaskSampling::Random { n_samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0, attempt as u64));
            (0..n_samples)
                .map(|_| (0..m).map(|_| rng.random_bool(0.5)).collect())
                .collect()
        }
    }
}

fn kernel(mask: &[bool], width: f64) -> f64 {
    let kept = mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64;
    (-(1.0 - kept).powi(2) / (width * width)).exp()
}

/// Solves the weighted ridge problem with an unpenalized intercept.
fn weighted_ridge(masks: &[Vec<bool>], y: &[f64], pi: &[f64], ridge: f64) -> Option<(Vec<f64>, f64)> {
    let m = masks[0].len();
    let p = m + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((mask, &t), &w) in masks.iter().zip(y).zip(pi) {
        row[0] = 1.0;
        for (r, &b) in row[1..].iter_mut().zip(mask) {
            *r = if b { 1.0 } else { 0.0 };
        }
        for i in 0..p {
            rhs[i] += w * row[i] * t;
            for j in 0..p {
                gram[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    for i in 1..p {
        gram[(i, i)] += ridge;
    }
    let beta = gram.cholesky()?.solve(&rhs);
    if beta.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((beta.iter().skip(1).copied().collect(), beta[0]))
}

/// Fits the surrogate to `score(mask)`, resampling up to three times when
/// the design is singular.
pub fn lime_fit<F>(
    m: usize,
    sampling: MaskSampling,
    kernel_width: f64,
    ridge: f64,
    mut score: F,
) -> Result<LimeExplanation>
where
    F: FnMut(&[bool]) -> Result<f64>,
{
    if m == 0 {
        return Err(Error::InvalidInput("no segments to explain".into()));
    }
    if !(kernel_width > 0.0 && kernel_width.is_finite()) {
        return Err(Error::InvalidConfig("kernel width must be positive".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidConfig("ridge strength must be nonnegative".into()));
    }
    let seed = match sampling {
        MaskSampling::Random { n_samples, seed } => {
            if n_samples < m + 1 {
                return Err(Error::InvalidInput(format!(
                    "need at least {} samples for {m} segments, got {n_samples}",
                    m + 1
                )));
            }
            seed
        }
        MaskSampling::Exhaustive => {
            if m > MAX_EXHAUSTIVE_UNITS {
                return Err(Error::InvalidInput(format!(
                    "exhaustive enumeration supports at most {MAX_EXHAUSTIVE_UNITS} segments"
                )));
            }
            0
        }
    };
    for attempt in 0..MAX_ATTEMPTS {
        let masks = sample_masks(m, sampling, attempt);
        if masks.iter().all(|mk| *mk == masks[0]) {
            continue;
        }
        let mut y = Vec::with_capacity(masks.len());
        for mask in &masks {
            y.push(score(mask)?);
        }
        let pi: Vec<f64> = masks.iter().map(|mk| kernel(mk, kernel_width)).collect();
        if let Some((weights, intercept)) = weighted_ridge(&masks, &y, &pi, ridge) {
            return Ok(LimeExplanation {
                weights,
                intercept,
                n_samples: masks.len(),
                kernel_width,
                ridge,
                seed,
            });
        }
    }
    Err(Error::SingularDesign {
        attempts: MAX_ATTEMPTS,
    })
}

/// Surrogate weights for the probability of the class predicted on `image`.
pub fn lime_explain(
    model: &LayeredNetwork,
    image: &Tensor,
    partition: &Partition,
    cfg: &LimeConfig,
) -> Result<LimeExplanation> {
    let class = argmax(&model.logits(image.data())?);
    let pert = SegmentPerturbation::new(image, partition, cfg.fill, cfg.seed)?;
    let m = partition.regions;
    let mut removed = Vec::with_capacity(m);
    lime_fit(
        m,
        MaskSampling::Random {
            n_samples: cfg.n_samples,
            seed: cfg.seed,
        },
        cfg.kernel_width,
        cfg.ridge,
        |mask| {
            removed.clear();
            removed.extend((0..m).filter(|&i| !mask[i]));
            let x = pert.apply(&removed, removed.len())?;
            Ok(softmax(&model.logits(&x)?)[class])
        },
    )
}
