//! Fixed-support return distributions and multi-step aggregation.

use serde::{Deserialize, Serialize};

use super::replay::Experience;
use crate::error::{Error, Result};

/// Evenly spaced atoms `z_i = v_min + iΔ`, `Δ = (v_max − v_min)/(N − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    atoms: usize,
    v_min: f64,
    v_max: f64,
}

impl Support {
    pub fn new(atoms: usize, v_min: f64, v_max: f64) -> Result<Self> {
        if atoms < 2 || !(v_max > v_min) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(Error::config("support needs at least 2 atoms and v_min < v_max"));
        }
        Ok(Self { atoms, v_min, v_max })
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn delta(&self) -> f64 {
        (self.v_max - self.v_min) / (self.atoms - 1) as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        if i + 1 == self.atoms {
            self.v_max
        } else {
            self.v_min + i as f64 * self.delta()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.atoms).map(|i| self.z(i)).collect()
    }

    /// `Σ p_i z_i`.
    pub fn mean(&self, p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(i, &pi)| pi * self.z(i)).sum()
    }
}

/// Projects the Bellman-shifted distribution `r + γ(1 − done)z` back onto
/// the support, splitting each atom's mass linearly between its neighbours.
/// Targets outside `[v_min, v_max]` are clamped first.
pub fn categorical_project(next_dist: &[f64], reward: f64, gamma: f64, done: bool, support: &Support) -> Vec<f64> {
    let n = support.atoms();
    let delta = support.delta();
    let live = if done { 0.0 } else { 1.0 };
    let mut m = vec![0.0; n];
    for (j, &p) in next_dist.iter().enumerate() {
        let tz = (reward + gamma * live * support.z(j)).clamp(support.v_min(), support.v_max());
        let b = ((tz - support.v_min()) / delta).clamp(0.0, (n - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            m[l] += p;
        } else {
            m[l] += p * (u as f64 - b);
            m[u] += p * (b - l as f64);
        }
    }
    m
}

/// Collapses up to `n` consecutive transitions starting at `window[0]`:
/// reward `Σ_{k<n} γ^k r_k`, stopping after the first terminal; the next
/// state is that of the last transition used.
pub fn nstep_aggregate(window: &[Experience], n: usize, gamma: f64) -> Result<Experience> {
    if window.is_empty() || n == 0 {
        return Err(Error::contract("n-step aggregation needs a non-empty window and n >= 1"));
    }
    let mut out = window[0];
    out.reward = 0.0;
    let mut discount = 1.0;
    for e in window.iter().take(n) {
        out.reward += discount * e.reward;
        out.next_obs = e.next_obs;
        out.done = e.done;
        discount *= gamma;
        if e.done {
            break;
        }
    }
    Ok(out)
}
