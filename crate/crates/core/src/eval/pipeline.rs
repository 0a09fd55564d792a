//! Per-image MoRF evaluation of every explainer on a shared segmentation.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::lime::{lime_explain, LimeConfig};
use super::morf::{
    morf_curve, random_baseline, Fill, LatentPerturbation, MorfResult, SegmentPerturbation,
};
use super::stream_seed;
use crate::error::{Error, Result};
use crate::explain::{descending_order, explain, flip_order_hierarchical};
use crate::lrp::LrpConfig;
use crate::mlf::{build_flat_autoencoder, build_segmentation_autoencoder, build_vae_autoencoder};
use crate::nn::LayeredNetwork;
use crate::segmentation::{
    auto_thresholds, hierarchical_segment, SegmentOptions, SegmentationHierarchy,
    DEFAULT_QUANTILES,
};
use crate::synth::input_noise_fill;
use crate::tensor::Tensor;
use crate::vae::VaeModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Explainer {
    GmlfFlat,
    GmlfHier,
    GmlfVae,
    Lime,
    /// Random segment order.
    Random,
    /// Random latent order.
    RandomLatent,
}

impl Explainer {
    pub const ALL: [Explainer; 6] = [
        Explainer::GmlfFlat,
        Explainer::GmlfHier,
        Explainer::GmlfVae,
        Explainer::Lime,
        Explainer::Random,
        Explainer::RandomLatent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Explainer::GmlfFlat => "gmlf-flat",
            Explainer::GmlfHier => "gmlf-hier",
            Explainer::GmlfVae => "gmlf-vae",
            Explainer::Lime => "lime",
            Explainer::Random => "random",
            Explainer::RandomLatent => "random-latent",
        }
    }

    pub fn needs_vae(self) -> bool {
        matches!(self, Explainer::GmlfVae | Explainer::RandomLatent)
    }
}

impl FromStr for Explainer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Explainer::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown explainer `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationConfig {
    /// Quantiles of the MST edge weights used as thresholds, coarse to fine.
    pub quantiles: Vec<f64>,
    pub min_region: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self {
            quantiles: DEFAULT_QUANTILES.to_vec(),
            min_region: 8,
        }
    }
}

pub fn segment_image(image: &Tensor, cfg: &SegmentationConfig) -> Result<SegmentationHierarchy> {
    let thresholds = auto_thresholds(image, &cfg.quantiles)?;
    hierarchical_segment(image, &thresholds, &SegmentOptions::with_min_region(cfg.min_region))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Maximum flip steps; images with fewer units flip all of them.
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
    pub fill: Fill,
    pub lrp: LrpConfig,
    pub lime_samples: usize,
    pub lime_kernel_width: f64,
    pub lime_ridge: f64,
    pub segmentation: SegmentationConfig,
}

impl Default for EvalConfig {
    /// Noise over the model-input range and the α = 2, β = 1 rule.
    fn default() -> Self {
        let lime = LimeConfig::default();
        Self {
            steps: 10,
            trials: 10,
            seed: 0,
            fill: input_noise_fill(),
            lrp: LrpConfig::new(2.0, 1.0, 1e-9).expect("valid rule"),
            lime_samples: lime.n_samples,
            lime_kernel_width: lime.kernel_width,
            lime_ridge: lime.ridge,
            segmentation: SegmentationConfig::default(),
        }
    }
}

pub struct Evaluator<'a> {
    pub classifier: &'a LayeredNetwork,
    pub vae: Option<&'a VaeModel>,
    pub config: &'a EvalConfig,
}

impl Evaluator<'_> {
    /// MoRF curve of one explainer on one image. Noise images and random
    /// orderings are seeded from `(config.seed, image_id)`, so every explainer
    /// sees the same fill for a given image.
    pub fn evaluate(&self, explainer: Explainer, image: &Tensor, image_id: u64) -> Result<MorfResult> {
        let cfg = self.config;
        let x = image.data();
        let fill_seed = stream_seed(cfg.seed, image_id, 0);
        let order_seed = stream_seed(cfg.seed, image_id, 1);

        if explainer.needs_vae() {
            let vae = self
                .vae
                .ok_or_else(|| Error::InvalidInput(format!("{} needs a vae model", explainer.name())))?;
            let ae = build_vae_autoencoder(vae, x)?;
            let pert = LatentPerturbation::new(&ae, &ae.encoding, fill_seed)?;
            let steps = cfg.steps.min(ae.encoding.len());
            return if explainer == Explainer::GmlfVae {
                let report = explain(self.classifier, x, &ae, &cfg.lrp)?;
                morf_curve(self.classifier, x, &pert, &descending_order(report.finest()), steps)
            } else {
                random_baseline(self.classifier, x, &pert, steps, cfg.trials, order_seed)
            };
        }

        let hierarchy = segment_image(image, &cfg.segmentation)?;
        let partition = hierarchy.finest();
        let pert = SegmentPerturbation::new(image, partition, cfg.fill, fill_seed)?;
        let steps = cfg.steps.min(partition.regions);
        let ordering = match explainer {
            Explainer::GmlfFlat => {
                let ae = build_flat_autoencoder(image, partition)?;
                descending_order(explain(self.classifier, x, &ae, &cfg.lrp)?.finest())
            }
            Explainer::GmlfHier => {
                let ae = build_segmentation_autoencoder(image, &hierarchy)?;
                let report = explain(self.classifier, x, &ae, &cfg.lrp)?;
                flip_order_hierarchical(&hierarchy, &report)?
            }
            Explainer::Lime => {
                let lime = LimeConfig {
                    n_samples: cfg.lime_samples.max(partition.regions + 1),
                    kernel_width: cfg.lime_kernel_width,
                    ridge: cfg.lime_ridge,
                    seed: fill_seed,
                    fill: cfg.fill,
                };
                descending_order(&lime_explain(self.classifier, image, partition, &lime)?.weights)
            }
            Explainer::Random => {
                return random_baseline(self.classifier, x, &pert, steps, cfg.trials, order_seed);
            }
            Explainer::GmlfVae | Explainer::RandomLatent => unreachable!("handled above"),
        };
        morf_curve(self.classifier, x, &pert, &ordering, steps)
    }
}
