//! Demo state: a small classifier trained on synthetic shapes, the current
//! image, its segmentation and the last explanation.

use gmlf::eval::{segment_image, EvalConfig, Evaluator, Explainer, SegmentationConfig};
use gmlf::explain::{explain, RelevanceReport};
use gmlf::lrp::LrpConfig;
use gmlf::mlf::{build_flat_autoencoder, build_segmentation_autoencoder};
use gmlf::nn::{argmax, softmax, train_classifier, LayeredNetwork, TrainConfig};
use gmlf::render::{line_plot_svg, pixel_heatmap, segment_overlay, RgbImage};
use gmlf::segmentation::{auto_thresholds, hierarchical_segment, level_quantiles, SegmentOptions, SegmentationHierarchy};
use gmlf::synth::{from_model_input, synth_images, to_dataset, to_model_input, Shape, SynthConfig};
use gmlf::{Error, Result, Tensor};
use serde::Serialize;

const TRAIN_IMAGES: usize = 240;

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    pub class: String,
    pub probabilities: Vec<(String, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentSummary {
    pub thresholds: Vec<f64>,
    /// Coarse to fine.
    pub region_counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SegmentRelevance {
    pub segment: usize,
    pub pixels: usize,
    pub relevance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExplainSummary {
    pub class: String,
    pub logit: f64,
    /// Finest level, most relevant first.
    pub ranked: Vec<SegmentRelevance>,
    /// Sum of the finest level; short of the logit by what the biases absorb.
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveSummary {
    pub explainer: String,
    pub scores: Vec<f64>,
    pub aopc: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MorfSummary {
    pub curves: Vec<CurveSummary>,
    pub svg: String,
}

pub struct Demo {
    classifier: LayeredNetwork,
    accuracy: f64,
    image: Tensor,
    hierarchy: SegmentationHierarchy,
    report: Option<RelevanceReport>,
}

fn shape_names() -> Vec<String> {
    Shape::ALL.iter().map(|s| s.name().to_string()).collect()
}

impl Demo {
    /// Trains a one-hidden-layer classifier on synthetic shapes and loads a first sample.
    pub fn new(seed: u64) -> Result<Self> {
        let images = synth_images(&SynthConfig { n: TRAIN_IMAGES, seed, ..Default::default() })?;
        let data = to_dataset(&images, Shape::ALL.len())?;
        let cfg = TrainConfig { epochs: 15, seed, ..TrainConfig::classifier_default() };
        let classifier = train_classifier(&data, &[data.dim(), 64, Shape::ALL.len()], &cfg)?.network;
        let held_out = synth_images(&SynthConfig { n: 60, seed: seed + 1, ..Default::default() })?;
        let accuracy = to_dataset(&held_out, Shape::ALL.len())?.accuracy(&classifier)?;
        let image = to_model_input(&held_out[0].image);
        let hierarchy = segment_image(&image, &SegmentationConfig::default())?;
        Ok(Self { classifier, accuracy, image, hierarchy, report: None })
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    /// Draws a fresh image of `shape` and segments it with the default levels.
    pub fn load_sample(&mut self, shape: &str, seed: u64, noise: f64) -> Result<Prediction> {
        let shape: Shape = shape.parse()?;
        let cfg = SynthConfig { n: 1, classes: vec![shape], noise, seed, ..Default::default() };
        let sample = synth_images(&cfg)?.remove(0);
        self.image = to_model_input(&sample.image);
        self.hierarchy = segment_image(&self.image, &SegmentationConfig::default())?;
        self.report = None;
        self.predict()
    }

    pub fn predict(&self) -> Result<Prediction> {
        let p = softmax(&self.classifier.logits(self.image.data())?);
        let names = shape_names();
        let best = argmax(&p);
        Ok(Prediction {
            class: names[best].clone(),
            probabilities: names.into_iter().zip(p).collect(),
        })
    }

    pub fn segment(&mut self, levels: usize, min_region: usize) -> Result<SegmentSummary> {
        if levels == 0 {
            return Err(Error::InvalidInput("at least one level is required".into()));
        }
        let thresholds = auto_thresholds(&self.image, &level_quantiles(levels))?;
        self.hierarchy = hierarchical_segment(&self.image, &thresholds, &SegmentOptions::with_min_region(min_region))?;
        self.report = None;
        Ok(SegmentSummary { thresholds, region_counts: self.hierarchy.region_counts() })
    }

    /// Relevance of the current segmentation's regions; `hier` explains the whole hierarchy.
    pub fn explain(&mut self, hier: bool, alpha: f64, beta: f64) -> Result<ExplainSummary> {
        let cfg = LrpConfig::new(alpha, beta, 1e-9)?;
        let ae = if hier {
            build_segmentation_autoencoder(&self.image, &self.hierarchy)?
        } else {
            build_flat_autoencoder(&self.image, self.hierarchy.finest())?
        };
        let report = explain(&self.classifier, self.image.data(), &ae, &cfg)?;
        let sizes = self.hierarchy.finest().region_sizes();
        let finest = report.finest();
        let mut ranked: Vec<SegmentRelevance> = finest
            .iter()
            .enumerate()
            .map(|(segment, &relevance)| SegmentRelevance { segment, pixels: sizes[segment], relevance })
            .collect();
        ranked.sort_by(|a, b| b.relevance.total_cmp(&a.relevance));
        let summary = ExplainSummary {
            class: shape_names()[report.predicted_class].clone(),
            logit: report.logit,
            total: finest.iter().sum(),
            ranked,
        };
        self.report = Some(report);
        Ok(summary)
    }

    /// Region-flipping curves for the current image under the evaluation defaults.
    pub fn morf(&self, steps: usize, trials: usize, lime_samples: usize) -> Result<MorfSummary> {
        let cfg = EvalConfig { steps, trials, lime_samples, ..EvalConfig::default() };
        let ev = Evaluator { classifier: &self.classifier, vae: None, config: &cfg };
        let curves = [Explainer::GmlfFlat, Explainer::GmlfHier, Explainer::Lime, Explainer::Random]
            .into_iter()
            .map(|e| {
                let r = ev.evaluate(e, &self.image, 0)?;
                Ok(CurveSummary { explainer: e.name().into(), scores: r.scores, aopc: r.aopc })
            })
            .collect::<Result<Vec<_>>>()?;
        let series: Vec<(String, Vec<f64>)> = curves.iter().map(|c| (c.explainer.clone(), c.scores.clone())).collect();
        let svg = line_plot_svg("Region flipping", "p(original class)", &series);
        Ok(MorfSummary { curves, svg })
    }

    pub fn width(&self) -> usize {
        self.hierarchy.width()
    }

    pub fn height(&self) -> usize {
        self.hierarchy.height()
    }

    pub fn levels(&self) -> usize {
        self.hierarchy.depth()
    }

    fn display_image(&self) -> Tensor {
        from_model_input(&self.image)
    }

    pub fn image(&self) -> Result<RgbImage> {
        RgbImage::from_tensor(&self.display_image())
    }

    /// Every region of `level` tinted in its own color.
    pub fn level_view(&self, level: usize) -> Result<RgbImage> {
        let partition = self
            .hierarchy
            .levels
            .get(level)
            .ok_or_else(|| Error::InvalidInput(format!("no level {level}")))?;
        let order: Vec<f64> = (0..partition.regions).map(|r| -(r as f64)).collect();
        Ok(segment_overlay(&self.display_image(), partition, &order, partition.regions)?.image)
    }

    /// The `top` most relevant finest regions of the last explanation.
    pub fn overlay(&self, top: usize) -> Result<RgbImage> {
        let report = self.last_report()?;
        Ok(segment_overlay(&self.display_image(), self.hierarchy.finest(), report.finest(), top)?.image)
    }

    pub fn heatmap(&self) -> Result<RgbImage> {
        let report = self.last_report()?;
        pixel_heatmap(self.height(), self.width(), &report.pixel_relevance)
    }

    fn last_report(&self) -> Result<&RelevanceReport> {
        self.report
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("explain the image first".into()))
    }
}

/// Nearest-neighbour upscale as RGBA bytes for a canvas.
pub fn rgba(image: &RgbImage, scale: usize) -> Vec<u8> {
    image
        .scaled(scale)
        .pixels
        .iter()
        .flat_map(|&[r, g, b]| [r, g, b, 255])
        .collect()
}
