//! Browser bindings for the segment / explain / region-flipping demo.

pub mod demo;

use serde::Serialize;
use wasm_bindgen::prelude::*;

pub use demo::Demo;

fn js_err(e: gmlf::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("summary serializes")
}

#[wasm_bindgen]
pub struct WebDemo {
    inner: Demo,
}

#[wasm_bindgen]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<WebDemo, JsError> {
        Ok(Self { inner: Demo::new(seed as u64).map_err(js_err)? })
    }

    pub fn accuracy(&self) -> f64 {
        self.inner.accuracy()
    }

    pub fn width(&self) -> usize {
        self.inner.width()
    }

    pub fn height(&self) -> usize {
        self.inner.height()
    }

    pub fn levels(&self) -> usize {
        self.inner.levels()
    }

    /// Prediction as JSON.
    #[wasm_bindgen(js_name = loadSample)]
    pub fn load_sample(&mut self, shape: &str, seed: u32, noise: f64) -> Result<String, JsError> {
        self.inner.load_sample(shape, seed as u64, noise).map(|p| json(&p)).map_err(js_err)
    }

    pub fn segment(&mut self, levels: usize, min_region: usize) -> Result<String, JsError> {
        self.inner.segment(levels, min_region).map(|s| json(&s)).map_err(js_err)
    }

    pub fn explain(&mut self, hier: bool, alpha: f64, beta: f64) -> Result<String, JsError> {
        self.inner.explain(hier, alpha, beta).map(|s| json(&s)).map_err(js_err)
    }

    pub fn morf(&self, steps: usize, trials: usize, lime_samples: usize) -> Result<String, JsError> {
        self.inner.morf(steps, trials, lime_samples).map(|s| json(&s)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = imageRgba)]
    pub fn image_rgba(&self, scale: usize) -> Result<Vec<u8>, JsError> {
        self.inner.image().map(|i| demo::rgba(&i, scale)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = levelRgba)]
    pub fn level_rgba(&self, level: usize, scale: usize) -> Result<Vec<u8>, JsError> {
        self.inner.level_view(level).map(|i| demo::rgba(&i, scale)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = overlayRgba)]
    pub fn overlay_rgba(&self, top: usize, scale: usize) -> Result<Vec<u8>, JsError> {
        self.inner.overlay(top).map(|i| demo::rgba(&i, scale)).map_err(js_err)
    }

    #[wasm_bindgen(js_name = heatmapRgba)]
    pub fn heatmap_rgba(&self, scale: usize) -> Result<Vec<u8>, JsError> {
        self.inner.heatmap().map(|i| demo::rgba(&i, scale)).map_err(js_err)
    }
}
