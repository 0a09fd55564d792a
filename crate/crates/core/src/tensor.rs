//! Shape-tagged dense `f64` arrays.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense array. Images use the `[height, width, channels]` layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "tensor shape {shape:?} must have positive extents"
            )));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::dims("tensor data", len, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Image tensor of shape `[height, width, channels]`.
    pub fn image(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![height, width, channels], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(height, width, channels)` for rank-2 or rank-3 tensors.
    pub fn image_dims(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((h, w, 1)),
            &[h, w, c] => Ok((h, w, c)),
            other => Err(Error::InvalidInput(format!(
                "expected an image tensor [h, w, c], got shape {other:?}"
            ))),
        }
    }

    /// Same data, new shape.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// Elementwise map; `f` must keep values finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "Tensor::map produced a non-finite value");
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn ensure_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
