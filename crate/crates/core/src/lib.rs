//! Explanations of dense image classifiers in terms of middle-level input
//! features: image segments (flat or hierarchical) and VAE latents.
//!
//! An input is encoded into its features, the matching decoder plus an
//! exactness-restoring residual is stacked under the classifier, and
//! relevance is propagated from the predicted logit back to the encoding.
//! The [`eval`] module scores the resulting explanations with region
//! flipping (MoRF/AOPC) against random and LIME-style baselines.

pub mod error;
pub mod nn;
pub mod lrp;
pub mod segmentation;
pub mod tensor;
pub mod synth;
pub mod vae;
pub mod mlf;
pub mod explain;
pub mod eval;
pub mod render;

pub use error::{Error, Result};
pub use tensor::Tensor;
