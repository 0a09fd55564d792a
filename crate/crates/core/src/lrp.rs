//! Layer-wise relevance propagation with the α–β rule.
//!
//! For a dense layer with inputs `a_i`, weights `w_ji` and biases `b_j`, the
//! contributions `z_ij = a_i * w_ji` of each output unit are split into a
//! positive pool `Σ z⁺ + b⁺` and a negative pool `Σ z⁻ + b⁻`. Output
//! relevance `R_j` is redistributed as
//!
//! ```text
//! R_i = Σ_j ( α z⁺_ij / (Σ z⁺ + b⁺ + ε)  -  β z⁻_ij / (Σ z⁻ + b⁻ - ε) ) R_j
//! ```
//!
//! Biases only enter the denominators, so whatever share they claim is
//! dropped. A unit with only one non-empty pool hands its whole relevance to
//! that pool; a unit with neither pool has its relevance dropped and counted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{argmax, ActivationTrace, DenseLayer, LayeredNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrpConfig {
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
}

impl Default for LrpConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            epsilon: 1e-9,
        }
    }
}

impl LrpConfig {
    pub fn new(alpha: f64, beta: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !((self.alpha - self.beta) - 1.0).abs().le(&1e-12) {
            return Err(Error::InvalidConfig(format!(
                "alpha - beta must equal 1, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return Err(Error::InvalidConfig("beta must be nonnegative".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// One-hot relevance at `target` (default: argmax) carrying that logit's value.
pub fn init_relevance(logits: &[f64], target: Option<usize>) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let t = target.unwrap_or_else(|| argmax(logits));
    if t >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "target class {t} outside [0, {})",
            logits.len()
        )));
    }
    let mut r = vec![0.0; logits.len()];
    r[t] = logits[t];
    Ok(r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerRelevance {
    pub relevance: Vec<f64>,
    /// Output units whose nonzero relevance had nowhere to go.
    pub dropped_units: usize,
}

pub fn lrp_linear(
    layer: &DenseLayer,
    in_acts: &[f64],
    out_rel: &[f64],
    cfg: &LrpConfig,
) -> Result<LayerRelevance> {
    if in_acts.len() != layer.n_in() {
        return Err(Error::dims("relevance input activations", layer.n_in(), in_acts.len()));
    }
    if out_rel.len() != layer.n_out() {
        return Err(Error::dims("output relevance", layer.n_out(), out_rel.len()));
    }
    let mut relevance = vec![0.0; layer.n_in()];
    let mut dropped_units = 0;
    let mut z = vec![0.0; layer.n_in()];

    for (j, &r_j) in out_rel.iter().enumerate() {
        if r_j == 0.0 {
            continue;
        }
        let mut pos = 0.0;
        let mut neg = 0.0;
        for ((z_ij, &w), &a) in z.iter_mut().zip(layer.row(j)).zip(in_acts) {
            *z_ij = a * w;
            if *z_ij > 0.0 {
                pos += *z_ij;
            } else {
                neg += *z_ij;
            }
        }
        let b = layer.biases()[j];
        let pos_pool = pos + b.max(0.0);
        let neg_pool = neg + b.min(0.0);

        let (pos_coef, neg_coef) = match (pos_pool > 0.0, neg_pool < 0.0) {
            (true, true) => (
                cfg.alpha * r_j / (pos_pool + cfg.epsilon),
                -cfg.beta * r_j / (neg_pool - cfg.epsilon),
            ),
            (true, false) => (r_j / (pos_pool + cfg.epsilon), 0.0),
            (false, true) => (0.0, r_j / (neg_pool - cfg.epsilon)),
            (false, false) => {
                dropped_units += 1;
                continue;
            }
        };
        for (r_i, &z_ij) in relevance.iter_mut().zip(&z) {
            if z_ij > 0.0 {
                *r_i += pos_coef * z_ij;
            } else if z_ij < 0.0 {
                *r_i += neg_coef * z_ij;
            }
        }
    }
    if relevance.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("relevance propagation"));
    }
    Ok(LayerRelevance {
        relevance,
        dropped_units,
    })
}

/// Relevance at the input of every layer, aligned with the forward trace.
#[derive(Clone, Debug)]
pub struct RelevanceTrace {
    /// `layers[k]` is the relevance of layer `k`'s inputs.
    pub layers: Vec<Vec<f64>>,
    /// Relevance placed on the logits.
    pub output: Vec<f64>,
    pub target: usize,
    pub dropped_units: usize,
    pub activations: ActivationTrace,
}

impl RelevanceTrace {
    /// Relevance of the network input.
    pub fn input(&self) -> &[f64] {
        &self.layers[0]
    }
}

/// Forward pass, logit initialization (softmax bypassed), then the α–β rule
/// layer by layer. Activation functions pass relevance through unchanged.
pub fn lrp_propagate(
    net: &LayeredNetwork,
    x: &[f64],
    cfg: &LrpConfig,
    target: Option<usize>,
) -> Result<RelevanceTrace> {
    cfg.validate()?;
    let activations = net.forward(x)?;
    let output = init_relevance(&activations.logits, target)?;
    let target = target.unwrap_or_else(|| argmax(&activations.logits));
    let mut layers = vec![Vec::new(); net.depth()];
    let mut dropped_units = 0;
    let mut current = output.clone();
    for (k, layer) in net.layers().iter().enumerate().rev() {
        let step = lrp_linear(layer, &activations.inputs[k], &current, cfg)?;
        dropped_units += step.dropped_units;
        current = step.relevance;
        layers[k] = current.clone();
    }
    Ok(RelevanceTrace {
        layers,
        output,
        target,
        dropped_units,
        activations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Readout};
    use proptest::prelude::*;

    fn layer(rows: &[Vec<f64>], act: Activation) -> DenseLayer {
        DenseLayer::from_rows(rows, vec![0.0; rows.len()], act).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn init_relevance_cases() {
        let l = [2.0, 5.0, 1.0];
        assert_eq!(init_relevance(&l, None).unwrap(), vec![0.0, 5.0, 0.0]);
        assert_eq!(init_relevance(&l, Some(0)).unwrap(), vec![2.0, 0.0, 0.0]);
        assert_eq!(init_relevance(&[0.0; 3], None).unwrap(), vec![0.0; 3]);
        assert!(init_relevance(&l, Some(3)).is_err());
    }

    #[test]
    fn alpha1_beta0_hand_example() {
        let l = layer(&[vec![3.0, 1.0]], Activation::Identity);
        let r = lrp_linear(&l, &[1.0, 2.0], &[5.0], &LrpConfig::default()).unwrap();
        assert!(close(&r.relevance, &[3.0, 2.0], 1e-8), "{:?}", r.relevance);
    }

    #[test]
    fn alpha2_beta1_hand_example() {
        let l = layer(&[vec![2.0, -1.0]], Activation::Identity);
        let cfg = LrpConfig::new(2.0, 1.0, 1e-12).unwrap();
        let r = lrp_linear(&l, &[1.0, 1.0], &[1.0], &cfg).unwrap();
        assert!(close(&r.relevance, &[2.0, -1.0], 1e-10), "{:?}", r.relevance);
        assert!((r.relevance.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_out_relevance_gives_zero() {
        let l = layer(&[vec![2.0, -1.0], vec![0.5, 0.5]], Activation::Relu);
        let r = lrp_linear(&l, &[1.0, 3.0], &[0.0, 0.0], &LrpConfig::default()).unwrap();
        assert_eq!(r.relevance, vec![0.0, 0.0]);
        assert_eq!(r.dropped_units, 0);
    }

    #[test]
    fn zero_weight_layer_absorbs_everything() {
        let l = DenseLayer::new(3, 2, vec![0.0; 6], vec![0.7, -1.2], Activation::Identity).unwrap();
        let r = lrp_linear(&l, &[1.0, 2.0, 3.0], &[4.0, -5.0], &LrpConfig::default()).unwrap();
        assert_eq!(r.relevance, vec![0.0; 3]);
    }

    #[test]
    fn empty_pools_are_counted() {
        let l = DenseLayer::zeros(2, 1, Activation::Identity);
        let r = lrp_linear(&l, &[1.0, 1.0], &[1.0], &LrpConfig::default()).unwrap();
        assert_eq!(r.dropped_units, 1);
        assert_eq!(r.relevance, vec![0.0, 0.0]);
    }

    #[test]
    fn single_sided_pool_conserves_under_alpha_beta() {
        let l = layer(&[vec![1.0, 2.0]], Activation::Identity);
        let cfg = LrpConfig::new(2.0, 1.0, 1e-12).unwrap();
        let r = lrp_linear(&l, &[1.0, 1.0], &[3.0], &cfg).unwrap();
        assert!(close(&r.relevance, &[1.0, 2.0], 1e-10));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let l = layer(&[vec![1.0, 2.0]], Activation::Identity);
        assert!(lrp_linear(&l, &[1.0], &[1.0], &LrpConfig::default()).is_err());
        assert!(lrp_linear(&l, &[1.0, 1.0], &[1.0, 2.0], &LrpConfig::default()).is_err());
    }

    #[test]
    fn linear_sum_over_active_set() {
        let active = [0usize, 2, 3];
        let mut row = vec![0.0; 5];
        for &j in &active {
            row[j] = 1.0;
        }
        let net = LayeredNetwork::new(vec![layer(&[row], Activation::Identity)], Readout::Logits)
            .unwrap();
        let x = [0.5, 0.9, 0.2, 0.7, 0.1];
        let t = lrp_propagate(&net, &x, &LrpConfig::default(), None).unwrap();
        let expected: Vec<f64> = (0..5)
            .map(|j| if active.contains(&j) { x[j] } else { 0.0 })
            .collect();
        assert!(close(t.input(), &expected, 1e-8), "{:?}", t.input());
    }

    #[test]
    fn identity_network_passes_initialization() {
        let net = LayeredNetwork::identity(3);
        let t = lrp_propagate(&net, &[1.0, 4.0, 2.0], &LrpConfig::default(), None).unwrap();
        assert!(close(t.input(), &[0.0, 4.0, 0.0], 1e-8));
        assert_eq!(t.output, vec![0.0, 4.0, 0.0]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(LrpConfig::new(1.0, 1.0, 1e-9).is_err());
        assert!(LrpConfig::new(1.0, 0.0, 0.0).is_err());
        assert!(LrpConfig::new(0.5, -0.5, 1e-9).is_err());
    }

    fn zero_bias_net(sizes: &[usize], seed: u64) -> LayeredNetwork {
        LayeredNetwork::random(sizes, Activation::Relu, Activation::Identity, Readout::Logits, seed)
            .unwrap()
    }

    proptest! {
        #[test]
        fn conservation_on_zero_bias_networks(
            seed in 0u64..10_000,
            x in proptest::collection::vec(0.0f64..1.0, 6),
            ab in prop_oneof![Just((1.0, 0.0)), Just((2.0, 1.0))],
        ) {
            let net = zero_bias_net(&[6, 8, 5, 3], seed);
            let cfg = LrpConfig::new(ab.0, ab.1, 1e-18).unwrap();
            let t = lrp_propagate(&net, &x, &cfg, None).unwrap();
            let total: f64 = t.output.iter().sum();
            prop_assume!(total.abs() > 1e-6);
            for rel in &t.layers {
                let s: f64 = rel.iter().sum();
                prop_assert!(((s - total) / total).abs() < 1e-9, "layer sum {} vs {}", s, total);
            }
        }

        #[test]
        fn relevance_scales_with_logits(
            seed in 0u64..10_000,
            x in proptest::collection::vec(-1.0f64..1.0, 4),
            c in 0.1f64..10.0,
        ) {
            let net = zero_bias_net(&[4, 6, 2], seed);
            let mut scaled = net.clone();
            let mut p = scaled.parameters();
            let last = net.layers()[0].weights().len() + net.layers()[0].biases().len();
            for v in &mut p[last..] {
                *v *= c;
            }
            scaled.set_parameters(&p).unwrap();
            let cfg = LrpConfig::new(2.0, 1.0, 1e-12).unwrap();
            let base = lrp_propagate(&net, &x, &cfg, None).unwrap();
            let big = lrp_propagate(&scaled, &x, &cfg, None).unwrap();
            for (a, b) in base.input().iter().zip(big.input()) {
                prop_assert!((a * c - b).abs() <= 1e-8 * (1.0 + b.abs()));
            }
        }
    }
}
