//! Synthetic shape images: squares, disks and triangles on a noisy background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Fill;
use crate::nn::Dataset;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Disk,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Disk, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Disk => "disk",
            Shape::Triangle => "triangle",
        }
    }

    /// Whether pixel center `(px, py)` lies inside the shape centered at `(cx, cy)` with half-size `r`.
    fn contains(self, px: f64, py: f64, cx: f64, cy: f64, r: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        match self {
            Shape::Square => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Triangle => {
                // apex up, base at cy + r
                let t = (dy + r) / (2.0 * r);
                (0.0..=1.0).contains(&t) && dx.abs() <= t * r
            }
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Shape::Square),
            "disk" => Ok(Shape::Disk),
            "triangle" => Ok(Shape::Triangle),
            other => Err(Error::InvalidInput(format!("unknown shape `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub classes: Vec<Shape>,
    pub size: usize,
    pub channels: usize,
    /// Standard deviation of additive Gaussian pixel noise, in [0, 1] intensity units.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 300,
            classes: Shape::ALL.to_vec(),
            size: 16,
            channels: 1,
            noise: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub image: Tensor,
    pub label: usize,
}

/// Class-balanced images with values quantized to multiples of 1/255, so
/// they survive an 8-bit PGM/PPM round trip unchanged.
pub fn synth_images(cfg: &SynthConfig) -> Result<Vec<LabeledImage>> {
    if cfg.classes.is_empty() || cfg.n < cfg.classes.len() {
        return Err(Error::InvalidInput(format!(
            "need at least one image per class ({} classes, n={})",
            cfg.classes.len(),
            cfg.n
        )));
    }
    if cfg.size < 8 {
        return Err(Error::InvalidInput("image size must be at least 8".into()));
    }
    if !(cfg.channels == 1 || cfg.channels == 3) {
        return Err(Error::InvalidInput("channels must be 1 or 3".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::InvalidInput("noise must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let s = cfg.size as f64;
    let mut out = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let label = i % cfg.classes.len();
        let shape = cfg.classes[label];
        let r = rng.random_range(0.25 * s..0.36 * s);
        let jitter = 0.12 * s;
        let cx = s / 2.0 + rng.random_range(-jitter..jitter);
        let cy = s / 2.0 + rng.random_range(-jitter..jitter);
        let bg: Vec<f64> = (0..cfg.channels).map(|_| rng.random_range(0.0..0.3)).collect();
        let fg: Vec<f64> = (0..cfg.channels).map(|_| rng.random_range(0.6..1.0)).collect();
        let mut data = Vec::with_capacity(cfg.size * cfg.size * cfg.channels);
        for y in 0..cfg.size {
            for x in 0..cfg.size {
                let inside = shape.contains(x as f64 + 0.5, y as f64 + 0.5, cx, cy, r);
                for c in 0..cfg.channels {
                    let base = if inside { fg[c] } else { bg[c] };
                    let v = if cfg.noise > 0.0 {
                        base + noise.sample(&mut rng)
                    } else {
                        base
                    };
                    data.push(quantize(v));
                }
            }
        }
        out.push(LabeledImage {
            image: Tensor::image(cfg.size, cfg.size, cfg.channels, data)?,
            label,
        });
    }
    Ok(out)
}

/// Model inputs are pixel intensities shifted from [0, 1] to [-0.5, 0.5].
pub const INPUT_OFFSET: f64 = 0.5;

pub fn to_model_input(image: &Tensor) -> Tensor {
    image.map(|v| v - INPUT_OFFSET)
}

pub fn from_model_input(input: &Tensor) -> Tensor {
    input.map(|v| v + INPUT_OFFSET)
}

/// Noise fill over the model-input range.
pub fn input_noise_fill() -> Fill {
    Fill::Noise {
        low: -INPUT_OFFSET,
        high: 1.0 - INPUT_OFFSET,
    }
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Dataset of model inputs (see [`to_model_input`]).
pub fn to_dataset(images: &[LabeledImage], classes: usize) -> Result<Dataset> {
    Dataset::new(
        images
            .iter()
            .map(|li| to_model_input(&li.image).into_data())
            .collect(),
        images.iter().map(|li| li.label).collect(),
        classes,
    )
}
