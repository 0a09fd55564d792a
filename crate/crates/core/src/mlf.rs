//! Encoder/decoder pairs over middle-level features.
//!
//! Segmentation decoders are fixed 0/1 networks: for a hierarchy
//! `S_1 (coarse) … S_K (fine)`, layer `k < K` maps `S_k` regions to the
//! `S_{k+1}` regions they contain, layer `K` maps finest regions to the pixel
//! entries they cover, and a final diagonal layer scales each entry by its
//! pixel value. Fed the all-ones encoding the decoder reproduces the image.
//!
//! VAE decoders are learned, so a residual bias `r = x - D(h)` restores
//! exact reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, LayeredNetwork, Readout};
use crate::segmentation::{Partition, SegmentationHierarchy};
use crate::tensor::Tensor;
use crate::vae::VaeModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MlfKind {
    FlatSeg,
    HierSeg,
    Vae,
}

impl MlfKind {
    pub fn is_segmentation(self) -> bool {
        !matches!(self, MlfKind::Vae)
    }
}

#[derive(Clone, Debug)]
pub enum Encoder {
    /// Constant all-ones code over the coarsest regions.
    AllOnes { len: usize },
    /// Posterior mean of a VAE encoder.
    VaeMean { network: LayeredNetwork, latent_dim: usize },
}

impl Encoder {
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Encoder::AllOnes { len } => Ok(vec![1.0; *len]),
            Encoder::VaeMean {
                network,
                latent_dim,
            } => {
                let mut out = network.logits(x)?;
                out.truncate(*latent_dim);
                Ok(out)
            }
        }
    }
}

/// What each encoding unit stands for.
#[derive(Clone, Debug)]
pub enum MlfCatalog {
    Segments(SegmentationHierarchy),
    Latents(usize),
}

impl MlfCatalog {
    /// Unit count per level (one level for latents).
    pub fn level_sizes(&self) -> Vec<usize> {
        match self {
            MlfCatalog::Segments(h) => h.region_counts(),
            MlfCatalog::Latents(m) => vec![*m],
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlfAutoencoder {
    pub kind: MlfKind,
    pub encoder: Encoder,
    pub decoder: LayeredNetwork,
    pub residual: Vec<f64>,
    pub catalog: MlfCatalog,
    /// The encoding of the image this autoencoder was built for.
    pub encoding: Vec<f64>,
}

impl MlfAutoencoder {
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.encode(x)
    }

    /// Decoder output without the residual.
    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.decoder.logits(h)
    }

    /// `decode(h) + residual`.
    pub fn reconstruct(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.decode(h)?;
        for (o, r) in out.iter_mut().zip(&self.residual) {
            *o += r;
        }
        Ok(out)
    }

    /// Zero-weight, bias-`r` identity layer from the encoding to pixel space.
    pub fn residual_layer(&self) -> DenseLayer {
        residual_layer(self.encoding.len(), &self.residual)
    }

    pub fn input_dim(&self) -> usize {
        self.residual.len()
    }
}

pub(crate) fn residual_layer(n_in: usize, residual: &[f64]) -> DenseLayer {
    DenseLayer::new(
        n_in,
        residual.len(),
        vec![0.0; n_in * residual.len()],
        residual.to_vec(),
        Activation::Identity,
    )
    .expect("residual layer dimensions are consistent")
}

/// `r = x - decoder(h)`.
pub fn build_residual_layer(x: &[f64], decoder: &LayeredNetwork, h: &[f64]) -> Result<Vec<f64>> {
    if decoder.output_dim() != x.len() {
        return Err(Error::dims("decoder output", x.len(), decoder.output_dim()));
    }
    let decoded = decoder.logits(h)?;
    Ok(x.iter().zip(&decoded).map(|(a, b)| a - b).collect())
}

/// Decoder over a segmentation hierarchy; a one-level hierarchy gives the flat kind.
pub fn build_segmentation_autoencoder(
    image: &Tensor,
    hierarchy: &SegmentationHierarchy,
) -> Result<MlfAutoencoder> {
    let (h, w, c) = image.image_dims()?;
    if hierarchy.height() != h || hierarchy.width() != w {
        return Err(Error::InvalidInput(format!(
            "hierarchy covers {}x{} pixels but the image is {h}x{w}",
            hierarchy.height(),
            hierarchy.width()
        )));
    }
    let x = image.data();
    let d = x.len();
    let mut layers = Vec::with_capacity(hierarchy.depth() + 1);

    for (k, parents) in hierarchy.parents.iter().enumerate() {
        let (n_in, n_out) = (hierarchy.levels[k].regions, hierarchy.levels[k + 1].regions);
        let mut weights = vec![0.0; n_in * n_out];
        for (child, &parent) in parents.iter().enumerate() {
            weights[child * n_in + parent] = 1.0;
        }
        layers.push(DenseLayer::new(n_in, n_out, weights, vec![0.0; n_out], Activation::Identity)?);
    }

    let finest = hierarchy.finest();
    let m = finest.regions;
    let mut to_pixels = vec![0.0; d * m];
    for (p, &region) in finest.labels.iter().enumerate() {
        for ch in 0..c {
            to_pixels[(p * c + ch) * m + region] = 1.0;
        }
    }
    layers.push(DenseLayer::new(m, d, to_pixels, vec![0.0; d], Activation::Identity)?);

    let mut diag = vec![0.0; d * d];
    for (i, &v) in x.iter().enumerate() {
        diag[i * d + i] = v;
    }
    layers.push(DenseLayer::new(d, d, diag, vec![0.0; d], Activation::Identity)?);

    let decoder = LayeredNetwork::new(layers, Readout::Logits)?;
    let encoder = Encoder::AllOnes {
        len: hierarchy.levels[0].regions,
    };
    let encoding = encoder.encode(x)?;
    let residual = build_residual_layer(x, &decoder, &encoding)?;
    Ok(MlfAutoencoder {
        kind: if hierarchy.depth() == 1 {
            MlfKind::FlatSeg
        } else {
            MlfKind::HierSeg
        },
        encoder,
        decoder,
        residual,
        catalog: MlfCatalog::Segments(hierarchy.clone()),
        encoding,
    })
}

pub fn build_flat_autoencoder(image: &Tensor, partition: &Partition) -> Result<MlfAutoencoder> {
    build_segmentation_autoencoder(
        image,
        &SegmentationHierarchy::from_levels(vec![partition.clone()])?,
    )
}

/// Explanation-time VAE autoencoder: encoding is the posterior mean.
pub fn build_vae_autoencoder(vae: &VaeModel, x: &[f64]) -> Result<MlfAutoencoder> {
    if x.len() != vae.input_dim() {
        return Err(Error::dims("vae input", vae.input_dim(), x.len()));
    }
    let encoder = Encoder::VaeMean {
        network: vae.encoder().clone(),
        latent_dim: vae.latent_dim(),
    };
    let encoding = encoder.encode(x)?;
    let decoder = vae.decoder().clone();
    let residual = build_residual_layer(x, &decoder, &encoding)?;
    Ok(MlfAutoencoder {
        kind: MlfKind::Vae,
        encoder,
        decoder,
        residual,
        catalog: MlfCatalog::Latents(vae.latent_dim()),
        encoding,
    })
}
