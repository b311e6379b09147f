//! Learning-curve aggregation across seeds and sample-complexity measures.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Per-episode mean over seeds with a two-sided 95% t interval half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub runs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
}

/// `t_{0.975, df}`.
pub fn t_quantile_975(df: usize) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::contract(format!("t distribution: {e}")))?;
    Ok(t.inverse_cdf(0.975))
}

pub fn aggregate_curves(runs: &[Vec<f64>]) -> Result<LearningCurve> {
    if runs.len() < 2 {
        return Err(Error::contract("confidence intervals need at least two runs"));
    }
    let len = runs[0].len();
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::contract("runs differ in length"));
    }
    let n = runs.len() as f64;
    let t = t_quantile_975(runs.len() - 1)?;
    let mut mean = Vec::with_capacity(len);
    let mut half_width = Vec::with_capacity(len);
    for e in 0..len {
        let m = runs.iter().map(|r| r[e]).sum::<f64>() / n;
        let var = runs.iter().map(|r| (r[e] - m).powi(2)).sum::<f64>() / (n - 1.0);
        mean.push(m);
        half_width.push(t * var.sqrt() / n.sqrt());
    }
    Ok(LearningCurve { runs: runs.to_vec(), mean, half_width })
}

/// Trailing moving average over at most `window` episodes.
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        sum += x;
        if i >= w {
            sum -= xs[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Mean of the last `window` entries (all of them if fewer).
pub fn final_window_mean(xs: &[f64], window: usize) -> f64 {
    let tail = &xs[xs.len().saturating_sub(window.max(1))..];
    if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// First episode (1-based) whose smoothed return reaches `fraction` of the
/// final smoothed return. For a non-positive final return the threshold is
/// `final / fraction`, so the test still asks for being close to the end value.
pub fn episodes_to_fraction(returns: &[f64], fraction: f64, window: usize) -> Option<usize> {
    let s = smooth(returns, window);
    let last = *s.last()?;
    let threshold = if last > 0.0 { fraction * last } else { last / fraction };
    s.iter().position(|&v| v >= threshold).map(|i| i + 1)
}
