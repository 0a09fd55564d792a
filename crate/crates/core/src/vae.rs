//! Dense β-VAE: encoder emits `[μ, log σ²]`, decoder maps a latent sample back to pixels.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::train::{clip_factor, OptimizerState};
use crate::nn::{
    backward, Activation, Gradients, LayeredNetwork, LossKind, ModelFile, Readout, TrainConfig,
    VaeSection,
};

pub const DEFAULT_LATENT_DIM: usize = 10;
pub const DEFAULT_BETA: f64 = 4.0;
pub const LOGVAR_CLAMP: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel {
    encoder: LayeredNetwork,
    decoder: LayeredNetwork,
    latent_dim: usize,
    beta: f64,
    latent_mean: Vec<f64>,
    latent_std: Vec<f64>,
}

impl VaeModel {
    pub fn new(encoder: LayeredNetwork, decoder: LayeredNetwork, beta: f64) -> Result<Self> {
        let m = decoder.input_dim();
        if encoder.output_dim() != 2 * m {
            return Err(Error::dims("vae encoder output", 2 * m, encoder.output_dim()));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::dims(
                "vae decoder output",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be nonnegative, got {beta}")));
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim: m,
            beta,
            latent_mean: vec![0.0; m],
            latent_std: vec![1.0; m],
        })
    }

    pub fn random(d: usize, arch: &VaeArch, beta: f64, seed: u64) -> Result<Self> {
        let m = arch.latent_dim;
        let mut enc_sizes = vec![d];
        enc_sizes.extend(&arch.hidden);
        enc_sizes.push(2 * m);
        let mut dec_sizes = vec![m];
        dec_sizes.extend(arch.hidden.iter().rev());
        dec_sizes.push(d);
        let encoder = LayeredNetwork::random(
            &enc_sizes,
            Activation::Relu,
            Activation::Identity,
            Readout::Logits,
            seed,
        )?;
        let decoder = LayeredNetwork::random(
            &dec_sizes,
            Activation::Relu,
            Activation::Identity,
            Readout::Logits,
            seed.wrapping_add(1),
        )?;
        Self::new(encoder, decoder, beta)
    }

    pub fn encoder(&self) -> &LayeredNetwork {
        &self.encoder
    }

    pub fn decoder(&self) -> &LayeredNetwork {
        &self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Mean of μ over the training set, per latent.
    pub fn latent_mean(&self) -> &[f64] {
        &self.latent_mean
    }

    /// Standard deviation of μ over the training set, per latent.
    pub fn latent_std(&self) -> &[f64] {
        &self.latent_std
    }

    pub fn with_latent_stats(mut self, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != self.latent_dim || std.len() != self.latent_dim {
            return Err(Error::dims("latent statistics", self.latent_dim, mean.len().max(std.len())));
        }
        self.latent_mean = mean;
        self.latent_std = std;
        Ok(self)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.logits(z)
    }

    /// Sum of squared errors between `x` and the decode of its posterior mean.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let (mu, _) = vae_encode(self, x)?;
        let xhat = self.decode(&mu)?;
        Ok(squared_error(x, &xhat))
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            networks: vec![
                ("encoder".to_string(), self.encoder.clone()),
                ("decoder".to_string(), self.decoder.clone()),
            ],
            vae: Some(VaeSection {
                latent_dim: self.latent_dim,
                beta: self.beta,
                latent_mean: self.latent_mean.clone(),
                latent_std: self.latent_std.clone(),
            }),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        let section = file
            .vae
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("model file has no vae section".into()))?;
        let get = |name: &str| {
            file.network(name)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("vae model file lacks network `{name}`")))
        };
        let model = Self::new(get("encoder")?, get("decoder")?, section.beta)?;
        if model.latent_dim != section.latent_dim {
            return Err(Error::dims("vae latent dim", section.latent_dim, model.latent_dim));
        }
        model.with_latent_stats(section.latent_mean.clone(), section.latent_std.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_model_file(&ModelFile::load(path)?)
    }
}

/// Hidden widths of the encoder (the decoder mirrors them) and the latent size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeArch {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for VaeArch {
    fn default() -> Self {
        Self {
            hidden: vec![256, 64],
            latent_dim: DEFAULT_LATENT_DIM,
        }
    }
}

/// Posterior mean and log-variance.
pub fn vae_encode(vae: &VaeModel, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut mu = vae.encoder.logits(x)?;
    let logvar = mu.split_off(vae.latent_dim);
    Ok((mu, logvar))
}

/// `z = μ + exp(log σ² / 2) ⊙ ε` with `log σ²` clamped to ±10.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::dims("reparameterization", mu.len(), logvar.len().max(eps.len())));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (lv.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP) / 2.0).exp() * e)
        .collect())
}

pub fn standard_normal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn vae_sample(mu: &[f64], logvar: &[f64], seed: u64) -> Result<Vec<f64>> {
    reparameterize(mu, logvar, &standard_normal(mu.len(), seed))
}

pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

fn squared_error(x: &[f64], xhat: &[f64]) -> f64 {
    x.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Summed squared reconstruction error plus `β · KL`.
pub fn vae_loss(x: &[f64], xhat: &[f64], mu: &[f64], logvar: &[f64], beta: f64) -> f64 {
    squared_error(x, xhat) + beta * kl_divergence(mu, logvar)
}

/// Batch-mean ELBO loss and gradients `(encoder, decoder)` for fixed noise draws `eps`.
pub fn vae_loss_and_gradient(
    vae: &VaeModel,
    batch: &[Vec<f64>],
    eps: &[Vec<f64>],
) -> Result<(f64, Gradients, Gradients)> {
    if batch.len() != eps.len() {
        return Err(Error::dims("noise draws", batch.len(), eps.len()));
    }
    let m = vae.latent_dim;
    let mut g_enc = Gradients::zeros_like(&vae.encoder);
    let mut g_dec = Gradients::zeros_like(&vae.decoder);
    let mut total = 0.0;
    for (x, e) in batch.iter().zip(eps) {
        if e.len() != m {
            return Err(Error::dims("noise draw", m, e.len()));
        }
        let enc = vae.encoder.forward(x)?;
        let (mu, lv_raw) = enc.logits.split_at(m);
        let lv: Vec<f64> = lv_raw.iter().map(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)).collect();
        let z = reparameterize(mu, &lv, e)?;
        let dec = vae.decoder.forward(&z)?;
        let xhat = &dec.logits;
        total += vae_loss(x, xhat, mu, &lv, vae.beta);

        let grad_xhat: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| 2.0 * (a - b)).collect();
        let grad_z = backward(&vae.decoder, &dec, &grad_xhat, &mut g_dec);
        let mut grad_enc = vec![0.0; 2 * m];
        for i in 0..m {
            let sigma = (lv[i] / 2.0).exp();
            grad_enc[i] = grad_z[i] + vae.beta * mu[i];
            let inside = lv_raw[i].abs() < LOGVAR_CLAMP;
            grad_enc[m + i] = if inside {
                grad_z[i] * 0.5 * sigma * e[i] + vae.beta * 0.5 * (lv[i].exp() - 1.0)
            } else {
                0.0
            };
        }
        backward(&vae.encoder, &enc, &grad_enc, &mut g_enc);
    }
    let n = batch.len().max(1) as f64;
    g_enc.scale(1.0 / n);
    g_dec.scale(1.0 / n);
    Ok((total / n, g_enc, g_dec))
}

#[derive(Clone, Debug)]
pub struct VaeTrainOutcome {
    pub model: VaeModel,
    /// Mean reconstruction error (decode of μ) before training.
    pub initial_reconstruction: f64,
    /// Mean reconstruction error after each epoch.
    pub epoch_reconstruction: Vec<f64>,
    /// Mean sampled ELBO loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

impl VaeTrainOutcome {
    pub fn final_reconstruction(&self) -> f64 {
        self.epoch_reconstruction
            .last()
            .copied()
            .unwrap_or(self.initial_reconstruction)
    }
}

fn mean_reconstruction(vae: &VaeModel, data: &[Vec<f64>]) -> Result<f64> {
    let mut sum = 0.0;
    for x in data {
        sum += vae.reconstruction_error(x)?;
    }
    Ok(sum / data.len() as f64)
}

pub fn train_vae(
    data: &[Vec<f64>],
    arch: &VaeArch,
    beta: f64,
    cfg: &TrainConfig,
) -> Result<VaeTrainOutcome> {
    cfg.validate()?;
    if cfg.loss != LossKind::VaeElbo {
        return Err(Error::InvalidConfig("vae training requires the vae-elbo loss".into()));
    }
    let d = match data.first() {
        Some(x) => x.len(),
        None => return Err(Error::InvalidInput("training set is empty".into())),
    };
    if let Some(bad) = data.iter().find(|x| x.len() != d) {
        return Err(Error::dims("training image", d, bad.len()));
    }
    if arch.latent_dim == 0 {
        return Err(Error::InvalidConfig("latent dimension must be positive".into()));
    }

    let mut vae = VaeModel::random(d, arch, beta, cfg.seed)?;
    let initial_reconstruction = mean_reconstruction(&vae, data)?;
    let m = arch.latent_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut opt_enc = OptimizerState::new(cfg.optimizer);
    let mut opt_dec = OptimizerState::new(cfg.optimizer);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_reconstruction = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut seen = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| data[i].clone()).collect();
            let eps: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| (0..m).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let (loss, mut g_enc, mut g_dec) = vae_loss_and_gradient(&vae, &batch, &eps)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            seen += loss * chunk.len() as f64;
            let s = clip_factor(g_enc.squared_norm() + g_dec.squared_norm(), cfg.clip_norm);
            g_enc.scale(s);
            g_dec.scale(s);
            opt_enc.step(&mut vae.encoder, &g_enc, cfg.learning_rate);
            opt_dec.step(&mut vae.decoder, &g_dec, cfg.learning_rate);
        }
        let recon = mean_reconstruction(&vae, data).unwrap_or(f64::NAN);
        if !recon.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: recon });
        }
        epoch_losses.push(seen / data.len() as f64);
        epoch_reconstruction.push(recon);
    }

    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    for x in data {
        let (mu, _) = vae_encode(&vae, x)?;
        for i in 0..m {
            sum[i] += mu[i];
            sq[i] += mu[i] * mu[i];
        }
    }
    let n = data.len() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(q, mu)| (q / n - mu * mu).max(0.0).sqrt())
        .collect();
    let model = vae.with_latent_stats(mean, std)?;

    Ok(VaeTrainOutcome {
        model,
        initial_reconstruction,
        epoch_reconstruction,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Optimizer;
    use rand::Rng;

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.0], &[0.0]), 0.0);
        assert!((kl_divergence(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
        assert_eq!(vae_loss(&[0.3, 0.7], &[0.3, 0.7], &[0.0], &[0.0], 4.0), 0.0);
    }

    #[test]
    fn kl_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let mu: f64 = rng.random_range(-5.0..5.0);
            let lv: f64 = rng.random_range(-8.0..8.0);
            assert!(kl_divergence(&[mu], &[lv]) >= 0.0);
        }
    }

    #[test]
    fn reparameterization_examples() {
        let eps = standard_normal(4, 9);
        assert_eq!(reparameterize(&[0.0; 4], &[0.0; 4], &eps).unwrap(), eps);
        let mu = [0.5, -1.0, 2.0, 0.0];
        let z = reparameterize(&mu, &[f64::NEG_INFINITY; 4], &eps).unwrap();
        for ((z, m), e) in z.iter().zip(&mu).zip(&eps) {
            assert!((z - m).abs() <= 1e-2 * e.abs());
        }
        assert_eq!(vae_sample(&mu, &[0.1; 4], 3).unwrap(), vae_sample(&mu, &[0.1; 4], 3).unwrap());
        assert!(reparameterize(&[0.0], &[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn default_encoding_has_ten_latents() {
        let vae = VaeModel::random(16, &VaeArch::default(), DEFAULT_BETA, 0).unwrap();
        let (mu, lv) = vae_encode(&vae, &[0.5; 16]).unwrap();
        assert_eq!((mu.len(), lv.len()), (10, 10));
        assert_eq!(vae.encoder().layers().iter().map(|l| l.n_out()).collect::<Vec<_>>(), vec![256, 64, 20]);
        assert_eq!(vae.decoder().layers().iter().map(|l| l.n_out()).collect::<Vec<_>>(), vec![64, 256, 16]);
    }

    #[test]
    fn mismatched_networks_are_rejected() {
        let enc = LayeredNetwork::identity(4);
        let dec = LayeredNetwork::identity(3);
        assert!(VaeModel::new(enc, dec, 1.0).is_err());
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let arch = VaeArch {
            hidden: vec![5],
            latent_dim: 2,
        };
        let vae = VaeModel::random(4, &arch, 1.5, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let eps: Vec<Vec<f64>> = (0..3).map(|i| standard_normal(2, i)).collect();
        let (_, g_enc, g_dec) = vae_loss_and_gradient(&vae, &batch, &eps).unwrap();

        let loss_at = |enc: &LayeredNetwork, dec: &LayeredNetwork| {
            let v = VaeModel::new(enc.clone(), dec.clone(), 1.5).unwrap();
            vae_loss_and_gradient(&v, &batch, &eps).unwrap().0
        };
        let h = 1e-5;
        for (net_is_enc, analytic) in [(true, g_enc.flatten()), (false, g_dec.flatten())] {
            let base = if net_is_enc { vae.encoder() } else { vae.decoder() };
            let params = base.parameters();
            for (i, &a) in analytic.iter().enumerate() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                let mut p = params.clone();
                p[i] += h;
                plus.set_parameters(&p).unwrap();
                p[i] -= 2.0 * h;
                minus.set_parameters(&p).unwrap();
                let (lp, lm) = if net_is_enc {
                    (loss_at(&plus, vae.decoder()), loss_at(&minus, vae.decoder()))
                } else {
                    (loss_at(vae.encoder(), &plus), loss_at(vae.encoder(), &minus))
                };
                let fd = (lp - lm) / (2.0 * h);
                assert!(rel_err(a, fd) < 1e-4, "param {i}: analytic {a}, fd {fd}");
            }
        }
    }

    fn small_cfg(lr: f64, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: lr,
            batch_size: 8,
            epochs,
            seed: 2,
            optimizer: Optimizer::SgdMomentum,
            loss: LossKind::VaeElbo,
            clip_norm: Some(20.0),
        }
    }

    #[test]
    fn memorizes_a_single_image() {
        let x: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64 / 15.0).collect();
        let data = vec![x.clone(); 8];
        let arch = VaeArch {
            hidden: vec![16],
            latent_dim: 2,
        };
        let out = train_vae(&data, &arch, 0.0, &small_cfg(0.01, 300)).unwrap();
        let mean = x.iter().sum::<f64>() / 16.0;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
        let per_pixel = out.final_reconstruction() / 16.0;
        assert!(per_pixel < 0.01 * var, "per-pixel error {per_pixel}, variance {var}");
    }

    #[test]
    fn huge_beta_collapses_the_posterior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..16).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let arch = VaeArch {
            hidden: vec![16],
            latent_dim: 3,
        };
        let out = train_vae(&data, &arch, 1e6, &small_cfg(1e-3, 100)).unwrap();
        for x in &data {
            let (mu, _) = vae_encode(&out.model, x).unwrap();
            let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 0.1, "|mu| = {norm}");
        }
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<Vec<f64>> = (0..24)
            .map(|i| {
                let base = (i % 3) as f64 / 3.0;
                (0..16).map(|_| base + rng.random_range(0.0..0.2)).collect()
            })
            .collect();
        let arch = VaeArch {
            hidden: vec![12],
            latent_dim: 2,
        };
        let cfg = small_cfg(2e-3, 20);
        let a = train_vae(&data, &arch, DEFAULT_BETA, &cfg).unwrap();
        let b = train_vae(&data, &arch, DEFAULT_BETA, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert!(a.final_reconstruction() <= a.initial_reconstruction);
        assert!(train_vae(&[], &arch, 1.0, &cfg).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.json");
        let vae = VaeModel::random(6, &VaeArch { hidden: vec![4], latent_dim: 2 }, 4.0, 1)
            .unwrap()
            .with_latent_stats(vec![0.1, -0.2], vec![1.5, 0.5])
            .unwrap();
        vae.save(&path).unwrap();
        assert_eq!(VaeModel::load(&path).unwrap(), vae);
    }

    #[test]
    fn latent_stats_survive_saving_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.json");
        let mean: Vec<f64> = (1..=3).map(|i| (i as f64 * 0.7310585786).sin() / 3.0).collect();
        let std: Vec<f64> = (1..=3).map(|i| 1.0 / (i as f64 + 0.123456789)).collect();
        let vae = VaeModel::random(6, &VaeArch { hidden: vec![4], latent_dim: 3 }, 0.1, 9)
            .unwrap()
            .with_latent_stats(mean.clone(), std.clone())
            .unwrap();
        vae.save(&path).unwrap();
        let back = VaeModel::load(&path).unwrap();
        assert!(back.latent_mean().iter().zip(&mean).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(back.latent_std().iter().zip(&std).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
