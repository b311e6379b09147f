//! On-policy episode storage and generalised advantage estimation.

use crate::env::{Observation, Transition, OBS_DIM};
use crate::error::{Error, Result};

/// Per-step aligned record of one on-policy episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub obs: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push_action(&mut self, obs: &Observation, action: usize) -> Result<()> {
        if self.obs.len() != self.rewards.len() {
            return Err(Error::contract("act called twice without observe"));
        }
        self.obs.push(obs.to_array());
        self.actions.push(action);
        Ok(())
    }

    pub fn push_outcome(&mut self, t: &Transition) -> Result<()> {
        if self.obs.len() != self.rewards.len() + 1 {
            return Err(Error::contract("observe called without a preceding act"));
        }
        self.rewards.push(t.reward);
        self.dones.push(t.done);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.actions.clear();
        self.rewards.clear();
        self.dones.clear();
    }

    /// Drops a trailing action that never received an outcome.
    pub fn complete_steps(&mut self) {
        self.obs.truncate(self.rewards.len());
        self.actions.truncate(self.rewards.len());
    }

    pub fn encode(&self, enc: &mut crate::codec::Encoder) {
        enc.usize(self.obs.len());
        for o in &self.obs {
            o.iter().for_each(|&v| enc.f64(v));
        }
        enc.usize(self.actions.len());
        self.actions.iter().for_each(|&a| enc.usize(a));
        enc.f64_slice(&self.rewards);
        enc.usize(self.dones.len());
        self.dones.iter().for_each(|&d| enc.bool(d));
    }

    pub fn decode(dec: &mut crate::codec::Decoder) -> Result<Self> {
        let n = dec.usize()?;
        let mut obs = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let mut o = [0.0; OBS_DIM];
            for v in &mut o {
                *v = dec.f64()?;
            }
            obs.push(o);
        }
        let n = dec.usize()?;
        let actions = (0..n).map(|_| dec.usize()).collect::<Result<_>>()?;
        let rewards = dec.f64_vec()?;
        let n = dec.usize()?;
        let dones = (0..n).map(|_| dec.bool()).collect::<Result<_>>()?;
        Ok(Self { obs, actions, rewards, dones })
    }
}

/// GAE(γ, λ): `δ_t = r_t + γ(1 − d_t)v_{t+1} − v_t`,
/// `A_t = δ_t + γλ(1 − d_t)A_{t+1}`, returns `A + v`. Values past the end of
/// the slice are taken as zero.
pub fn compute_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::contract("rewards, values and dones must have equal lengths"));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
