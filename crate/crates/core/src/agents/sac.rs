//! Discrete soft actor-critic with twin critics, exact expectations over the
//! action set and a fixed entropy temperature.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{argmax, entropy, log_softmax, sample_categorical, softmax};
use super::ppo::validate_hidden;
use super::replay::{Experience, ReplayBuffer};
use super::{
    check_finite, decode_config, decode_rng, encode_config, encode_rng, mlp, obs_batch, Agent, AgentConfig,
    AgentKind, Diagnostics, ParamCounts,
};
use crate::codec::{Decoder, Encoder};
use crate::env::{Action, Observation, Transition, NUM_ACTIONS, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Adam, DenseNet, Matrix};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub tau: f64,
    pub lr: f64,
    pub batch: usize,
    /// Entropy temperature α.
    pub alpha: f64,
    pub gamma: f64,
    pub capacity: usize,
    /// Environment steps with uniform random actions before learning starts.
    pub warmup: usize,
    /// Environment steps between training rounds.
    pub train_every: usize,
    /// Gradient updates per training round.
    pub updates_per_round: usize,
    pub hidden: Vec<usize>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            tau: 0.005,
            lr: 5e-4,
            batch: 64,
            alpha: 0.2,
            gamma: 0.99,
            capacity: 100_000,
            warmup: 1000,
            train_every: 80,
            updates_per_round: 1,
            hidden: vec![256, 256],
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("sac.tau must lie in (0, 1]"));
        }
        if !(self.lr > 0.0) || self.alpha < 0.0 || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("sac.lr > 0, sac.alpha >= 0 and sac.gamma in (0, 1) are required"));
        }
        if self.batch == 0 || self.capacity < self.batch || self.train_every == 0 || self.updates_per_round == 0 {
            return Err(Error::config("sac batch, capacity and update schedule must be positive (capacity >= batch)"));
        }
        validate_hidden("sac", &self.hidden)
    }
}

/// Per-state next-value term `Σ_a π(a|s′)(min Qᵗ(s′, a) − α log π(a|s′))`.
pub fn soft_state_value(policy_logits: &[f64], q1: &[f64], q2: &[f64], alpha: f64) -> f64 {
    let lp = log_softmax(policy_logits);
    lp.iter()
        .zip(q1.iter().zip(q2))
        .map(|(&l, (&a, &b))| l.exp() * (a.min(b) - alpha * l))
        .sum()
}

/// `y = r + γ(1 − done)·V_soft(s′)`.
pub fn sac_value_target(
    reward: f64,
    done: bool,
    gamma: f64,
    next_logits: &[f64],
    next_q1: &[f64],
    next_q2: &[f64],
    alpha: f64,
) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * soft_state_value(next_logits, next_q1, next_q2, alpha)
    }
}

/// Policy loss `mean_s Σ_a π(a|s)(α log π(a|s) − min Q(s, a))` and its
/// gradient with respect to the logits: `π_k (g_k − L_s) / B` with
/// `g = α log π − min Q`.
pub fn sac_policy_loss(logits: &Matrix, q1: &Matrix, q2: &Matrix, alpha: f64) -> (f64, Matrix) {
    let b = logits.rows() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for r in 0..logits.rows() {
        let lp = log_softmax(logits.row(r));
        let g: Vec<f64> = (0..lp.len()).map(|k| alpha * lp[k] - q1.get(r, k).min(q2.get(r, k))).collect();
        let ls: f64 = lp.iter().zip(&g).map(|(l, gk)| l.exp() * gk).sum();
        loss += ls / b;
        for (k, d) in grad.row_mut(r).iter_mut().enumerate() {
            *d = lp[k].exp() * (g[k] - ls) / b;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    cfg: SacConfig,
    actor: DenseNet,
    q1: DenseNet,
    q2: DenseNet,
    q1_target: DenseNet,
    q2_target: DenseNet,
    actor_opt: Adam,
    q1_opt: Adam,
    q2_opt: Adam,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    episode_stats: Vec<[f64; 4]>,
}

impl SacAgent {
    pub fn new(cfg: SacConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = mlp(&cfg.hidden, NUM_ACTIONS, seed::mix(seed, 1))?;
        let q1 = mlp(&cfg.hidden, NUM_ACTIONS, seed::mix(seed, 2))?;
        let q2 = mlp(&cfg.hidden, NUM_ACTIONS, seed::mix(seed, 3))?;
        Ok(Self {
            actor_opt: Adam::new(&actor, cfg.lr),
            q1_opt: Adam::new(&q1, cfg.lr),
            q2_opt: Adam::new(&q2, cfg.lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            replay: ReplayBuffer::new(cfg.capacity)?,
            rng: seed::stream_rng(seed, seed::STREAM_AGENT),
            env_steps: 0,
            updates: 0,
            episode_stats: Vec::new(),
            cfg,
        })
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critics(&self) -> (&DenseNet, &DenseNet) {
        (&self.q1, &self.q2)
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn action_probs(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(softmax(&self.actor.predict_one(&obs.to_array())?))
    }

    /// One gradient update of both critics and the actor on `batch`, then a
    /// soft update of the target critics. Returns
    /// `[critic loss, policy loss, entropy, twin-Q gap]`.
    pub fn update_on(&mut self, batch: &[Experience]) -> Result<[f64; 4]> {
        let n = batch.len() as f64;
        let obs: Vec<[f64; OBS_DIM]> = batch.iter().map(|e| e.obs).collect();
        let next: Vec<[f64; OBS_DIM]> = batch.iter().map(|e| e.next_obs).collect();
        let (x, xn) = (obs_batch(&obs), obs_batch(&next));

        let next_logits = self.actor.predict(&xn)?;
        let nq1 = self.q1_target.predict(&xn)?;
        let nq2 = self.q2_target.predict(&xn)?;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(r, e)| {
                sac_value_target(
                    e.reward,
                    e.done,
                    self.cfg.gamma,
                    next_logits.row(r),
                    nq1.row(r),
                    nq2.row(r),
                    self.cfg.alpha,
                )
            })
            .collect();

        let (q1v, t1) = self.q1.forward(&x)?;
        let (q2v, t2) = self.q2.forward(&x)?;
        let mut g1 = Matrix::zeros(batch.len(), NUM_ACTIONS);
        let mut g2 = Matrix::zeros(batch.len(), NUM_ACTIONS);
        let (mut closs, mut gap) = (0.0, 0.0);
        for (r, e) in batch.iter().enumerate() {
            let (d1, d2) = (q1v.get(r, e.action) - targets[r], q2v.get(r, e.action) - targets[r]);
            closs += 0.5 * (d1 * d1 + d2 * d2) / n;
            gap += (q1v.get(r, e.action) - q2v.get(r, e.action)).abs() / n;
            g1.set(r, e.action, d1 / n);
            g2.set(r, e.action, d2 / n);
        }
        check_finite("sac critic loss", closs)?;

        let (logits, ta) = self.actor.forward(&x)?;
        let (ploss, gp) = sac_policy_loss(&logits, &q1v, &q2v, self.cfg.alpha);
        check_finite("sac policy loss", ploss)?;
        let ent = (0..logits.rows()).map(|r| entropy(&softmax(logits.row(r)))).sum::<f64>() / n;

        let (gr1, _) = self.q1.backward(&t1, &g1)?;
        let (gr2, _) = self.q2.backward(&t2, &g2)?;
        let (gra, _) = self.actor.backward(&ta, &gp)?;
        self.q1_opt.step(&mut self.q1, &gr1)?;
        self.q2_opt.step(&mut self.q2, &gr2)?;
        self.actor_opt.step(&mut self.actor, &gra)?;
        self.q1_target.soft_update_from(&self.q1, self.cfg.tau)?;
        self.q2_target.soft_update_from(&self.q2, self.cfg.tau)?;
        self.updates += 1;
        Ok([closs, ploss, ent, gap])
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let AgentConfig::Sac(cfg) = decode_config(dec)? else {
            return Err(Error::Integrity("checkpoint does not hold a sac agent".into()));
        };
        let actor = DenseNet::decode(dec)?;
        let q1 = DenseNet::decode(dec)?;
        let q2 = DenseNet::decode(dec)?;
        let q1_target = DenseNet::decode(dec)?;
        let q2_target = DenseNet::decode(dec)?;
        let actor_opt = Adam::decode(dec)?;
        let q1_opt = Adam::decode(dec)?;
        let q2_opt = Adam::decode(dec)?;
        let replay = ReplayBuffer::decode(dec)?;
        let rng = decode_rng(dec)?;
        let env_steps = dec.u64()?;
        let updates = dec.u64()?;
        Ok(Self {
            cfg,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            actor_opt,
            q1_opt,
            q2_opt,
            replay,
            rng,
            env_steps,
            updates,
            episode_stats: Vec::new(),
        })
    }
}

impl Agent for SacAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Sac
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        if (self.env_steps as usize) < self.cfg.warmup {
            return Action::from_index(self.rng.random_range(0..NUM_ACTIONS));
        }
        let p = self.action_probs(obs)?;
        Action::from_index(sample_categorical(&p, &mut self.rng))
    }

    fn act_greedy(&self, obs: &Observation) -> Result<Action> {
        Action::from_index(argmax(&self.actor.predict_one(&obs.to_array())?))
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        self.replay.push(Experience::from_transition(t));
        self.env_steps += 1;
        let ready = self.env_steps as usize >= self.cfg.warmup && self.replay.len() >= self.cfg.batch;
        if ready && self.env_steps.is_multiple_of(self.cfg.train_every as u64) {
            for _ in 0..self.cfg.updates_per_round {
                let batch = self.replay.sample(self.cfg.batch, &mut self.rng)?;
                let stats = self.update_on(&batch)?;
                self.episode_stats.push(stats);
            }
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<Diagnostics> {
        let mut d = Diagnostics::new();
        d.insert("updates".into(), self.updates as f64);
        if !self.episode_stats.is_empty() {
            let n = self.episode_stats.len() as f64;
            for (i, name) in ["critic_loss", "policy_loss", "entropy", "twin_q_gap"].iter().enumerate() {
                d.insert((*name).into(), self.episode_stats.iter().map(|s| s[i]).sum::<f64>() / n);
            }
        }
        self.episode_stats.clear();
        Ok(d)
    }

    fn param_counts(&self) -> ParamCounts {
        let net = self.actor.param_count();
        let optimized = net + self.q1.param_count() + self.q2.param_count();
        ParamCounts { optimized, reported: optimized + self.q1_target.param_count() }
    }

    fn config(&self) -> AgentConfig {
        AgentConfig::Sac(self.cfg.clone())
    }

    fn encode(&self, enc: &mut Encoder) {
        encode_config(&self.config(), enc);
        for net in [&self.actor, &self.q1, &self.q2, &self.q1_target, &self.q2_target] {
            net.encode(enc);
        }
        for opt in [&self.actor_opt, &self.q1_opt, &self.q2_opt] {
            opt.encode(enc);
        }
        self.replay.encode(enc);
        encode_rng(&self.rng, enc);
        enc.u64(self.env_steps);
        enc.u64(self.updates);
    }
}
