//! Categorical-distribution helpers shared by the agents.

use rand::Rng;

/// Probabilities below this are clamped before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

/// `−Σ p log p`, with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `Σ p_old log(p_old / p_new)`. Entries are clamped at [`PROB_FLOOR`]; the
/// second return value reports whether clamping happened.
pub fn kl_categorical(p_old: &[f64], p_new: &[f64]) -> (f64, bool) {
    let mut clamped = false;
    let mut kl = 0.0;
    for (&a, &b) in p_old.iter().zip(p_new) {
        if a < PROB_FLOOR || b < PROB_FLOOR {
            clamped = true;
        }
        let (a, b) = (a.max(PROB_FLOOR), b.max(PROB_FLOOR));
        kl += a * (a / b).ln();
    }
    (kl.max(0.0), clamped)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Mean and (population) standard deviation normalisation in place.
pub fn normalize(v: &mut [f64]) {
    if v.len() < 2 {
        return;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in v.iter_mut() {
        *x = if std > 1e-12 { (*x - mean) / std } else { *x - mean };
    }
}
