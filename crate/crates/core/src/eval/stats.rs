use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// Paired one-sided t-test of `a > b`.
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::dims("paired samples", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput("paired t-test needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    let df = a.len() - 1;
    if var == 0.0 {
        let (t, p) = match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => (f64::INFINITY, 0.0),
            Some(std::cmp::Ordering::Less) => (f64::NEG_INFINITY, 1.0),
            _ => (0.0, 0.5),
        };
        return Ok(TTest {
            mean_difference: mean,
            t,
            df,
            p_value: p,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::InvalidInput(format!("t distribution: {e}")))?;
    Ok(TTest {
        mean_difference: mean,
        t,
        df,
        p_value: 1.0 - dist.cdf(t),
    })
}
