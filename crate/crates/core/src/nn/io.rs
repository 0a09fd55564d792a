//! Model files: a JSON manifest next to a little-endian `f64` blob.
//!
//! The manifest records the format version, every network's layer
//! dimensions, activations and readout, the blob size, and a SHA-256 over
//! the canonical manifest body followed by the blob bytes. The blob holds
//! each network's parameters in [`LayeredNetwork::parameters`] order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, DenseLayer, LayeredNetwork, Readout};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "gmlf-model";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub readout: Readout,
    pub layers: Vec<LayerSpec>,
}

/// Extra metadata carried by VAE model files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeSection {
    pub latent_dim: usize,
    pub beta: f64,
    /// Per-latent mean and standard deviation of the posterior mean over the training set.
    pub latent_mean: Vec<f64>,
    pub latent_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestBody {
    format: String,
    version: u32,
    networks: Vec<NetworkSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vae: Option<VaeSection>,
    blob_bytes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    #[serde(flatten)]
    body: ManifestBody,
    blob: String,
    checksum: String,
}

/// Named networks plus optional VAE metadata, as stored in one model file.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub networks: Vec<(String, LayeredNetwork)>,
    pub vae: Option<VaeSection>,
}

impl ModelFile {
    pub fn single(name: &str, net: LayeredNetwork) -> Self {
        Self {
            networks: vec![(name.to_string(), net)],
            vae: None,
        }
    }

    pub fn network(&self, name: &str) -> Option<&LayeredNetwork> {
        self.networks.iter().find(|(n, _)| n == name).map(|(_, net)| net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut blob = Vec::new();
        let mut specs = Vec::with_capacity(self.networks.len());
        for (name, net) in &self.networks {
            specs.push(NetworkSpec {
                name: name.clone(),
                readout: net.readout(),
                layers: net
                    .layers()
                    .iter()
                    .map(|l| LayerSpec {
                        n_in: l.n_in(),
                        n_out: l.n_out(),
                        activation: l.activation(),
                    })
                    .collect(),
            });
            for p in net.parameters() {
                blob.extend_from_slice(&p.to_le_bytes());
            }
        }
        let body = ManifestBody {
            format: FORMAT_TAG.into(),
            version: MODEL_FORMAT_VERSION,
            networks: specs,
            vae: self.vae.clone(),
            blob_bytes: blob.len(),
        };
        let checksum = checksum(&body, &blob)?;
        let blob_path = blob_path(path);
        let manifest = Manifest {
            body,
            blob: blob_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            checksum,
        };
        fs::write(&blob_path, &blob)?;
        fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        let body = manifest.body;
        if body.version != MODEL_FORMAT_VERSION || body.format != FORMAT_TAG {
            return Err(Error::VersionMismatch {
                expected: MODEL_FORMAT_VERSION,
                found: body.version,
            });
        }
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let blob = fs::read(dir.join(&manifest.blob))?;
        if blob.len() < body.blob_bytes || blob.len() % 8 != 0 {
            return Err(Error::TruncatedBlob {
                declared: body.blob_bytes,
                found: blob.len(),
            });
        }
        check_layout(&body)?;
        if checksum(&body, &blob)? != manifest.checksum {
            return Err(Error::ChecksumMismatch);
        }

        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut offset = 0;
        let mut networks = Vec::with_capacity(body.networks.len());
        for spec in &body.networks {
            let mut layers = Vec::with_capacity(spec.layers.len());
            for l in &spec.layers {
                let nw = l.n_in * l.n_out;
                let weights = values[offset..offset + nw].to_vec();
                offset += nw;
                let biases = values[offset..offset + l.n_out].to_vec();
                offset += l.n_out;
                layers.push(DenseLayer::new(l.n_in, l.n_out, weights, biases, l.activation)?);
            }
            networks.push((spec.name.clone(), LayeredNetwork::new(layers, spec.readout)?));
        }
        Ok(Self {
            networks,
            vae: body.vae,
        })
    }
}

/// The declared layer sizes must tile the blob exactly.
fn check_layout(body: &ManifestBody) -> Result<()> {
    let mut available = body.blob_bytes / 8;
    let mut last = None;
    for spec in &body.networks {
        for (k, l) in spec.layers.iter().enumerate() {
            let expected = l.n_in * l.n_out + l.n_out;
            if expected > available {
                return Err(Error::LayerBlobMismatch {
                    network: spec.name.clone(),
                    layer: k,
                    expected,
                    available,
                });
            }
            available -= expected;
            last = Some((spec.name.clone(), k, expected));
        }
    }
    match (available, last) {
        (0, _) => Ok(()),
        (extra, Some((network, layer, expected))) => Err(Error::LayerBlobMismatch {
            network,
            layer,
            expected,
            available: expected + extra,
        }),
        (_, None) => Err(Error::InvalidInput("model file declares no layers".into())),
    }
}

fn checksum(body: &ManifestBody, blob: &[u8]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(body)?);
    hasher.update(blob);
    Ok(hex::encode(hasher.finalize()))
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Writes a single-network model file.
pub fn save_model(path: &Path, net: &LayeredNetwork) -> Result<()> {
    ModelFile::single("model", net.clone()).save(path)
}

/// Reads the first network of a model file.
pub fn load_model(path: &Path) -> Result<LayeredNetwork> {
    let mut file = ModelFile::load(path)?;
    Ok(file.networks.swap_remove(0).1)
}
