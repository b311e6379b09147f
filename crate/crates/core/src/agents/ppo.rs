//! Proximal policy optimisation with a clipped surrogate.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{entropy, kl_categorical, log_softmax, sample_categorical, softmax};
use super::rollout::{compute_advantages, Rollout};
use super::{
    check_finite, decode_config, decode_rng, encode_config, encode_rng, mlp, obs_batch, Agent, AgentConfig,
    AgentKind, Diagnostics, ParamCounts,
};
use crate::codec::{Decoder, Encoder};
use crate::env::{Action, Observation, Transition, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{Adam, DenseNet, Matrix};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            lr_actor: 1e-5,
            lr_critic: 1e-3,
            clip: 0.2,
            epochs: 10,
            minibatch: 256,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.01,
            normalize_advantages: true,
            hidden: vec![64, 64],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return Err(Error::config("ppo learning rates must be positive"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::config("ppo.clip must lie in (0, 1)"));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::config("ppo.epochs and ppo.minibatch must be positive"));
        }
        validate_discounts("ppo", self.gamma, self.lambda)?;
        if self.entropy_coef < 0.0 {
            return Err(Error::config("ppo.entropy_coef must be non-negative"));
        }
        validate_hidden("ppo", &self.hidden)
    }
}

pub(crate) fn validate_discounts(name: &str, gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::config(format!("{name}.gamma must lie in (0, 1)")));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::config(format!("{name}.lambda must lie in (0, 1]")));
    }
    Ok(())
}

pub(crate) fn validate_hidden(name: &str, hidden: &[usize]) -> Result<()> {
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::config(format!("{name}.hidden must list positive widths")));
    }
    Ok(())
}

/// Per-sample clipped objective `min(ρA, clip(ρ, 1−ε, 1+ε)A)`.
pub fn clipped_objective(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// `∂ objective / ∂ log π(a)`: `ρA` where the unclipped branch is selected,
/// zero where the clipped branch is.
pub fn clipped_objective_grad(ratio: f64, advantage: f64, clip: f64) -> f64 {
    let clipped = (advantage >= 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    if clipped {
        0.0
    } else {
        ratio * advantage
    }
}

/// Prepared on-policy batch: everything the update needs, per step.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub obs: Matrix,
    pub actions: Vec<usize>,
    pub log_probs_old: Vec<f64>,
    pub probs_old: Vec<[f64; NUM_ACTIONS]>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn build(
        rollout: &Rollout,
        actor: &DenseNet,
        critic: &DenseNet,
        gamma: f64,
        lambda: f64,
        normalize: bool,
    ) -> Result<Self> {
        let obs = obs_batch(&rollout.obs);
        let logits = actor.predict(&obs)?;
        let mut log_probs_old = Vec::with_capacity(rollout.len());
        let mut probs_old = Vec::with_capacity(rollout.len());
        for (r, &a) in rollout.actions.iter().enumerate() {
            let lp = log_softmax(logits.row(r));
            log_probs_old.push(lp[a]);
            let mut p = [0.0; NUM_ACTIONS];
            p.iter_mut().zip(&lp).for_each(|(d, l)| *d = l.exp());
            probs_old.push(p);
        }
        let values = critic.predict(&obs)?.into_vec();
        let (mut advantages, returns) = compute_advantages(&rollout.rewards, &values, &rollout.dones, gamma, lambda)?;
        if normalize {
            super::policy::normalize(&mut advantages);
        }
        if advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::Training("non-finite advantage".into()));
        }
        Ok(Self { obs, actions: rollout.actions.clone(), log_probs_old, probs_old, values, advantages, returns })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Clipped-surrogate loss on a minibatch, with entropy bonus. Returns
/// `(loss, d loss / d logits, mean objective, mean entropy)`.
pub fn ppo_policy_loss(
    logits: &Matrix,
    actions: &[usize],
    log_probs_old: &[f64],
    advantages: &[f64],
    clip: f64,
    entropy_coef: f64,
) -> (f64, Matrix, f64, f64) {
    let b = actions.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let (mut obj_sum, mut ent_sum) = (0.0, 0.0);
    for (r, &a) in actions.iter().enumerate() {
        let lp = log_softmax(logits.row(r));
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        let h = entropy(&p);
        let ratio = (lp[a] - log_probs_old[r]).exp();
        let adv = advantages[r];
        obj_sum += clipped_objective(ratio, adv, clip);
        ent_sum += h;
        let g_lp = clipped_objective_grad(ratio, adv, clip);
        let row = grad.row_mut(r);
        for k in 0..p.len() {
            let d_obj = g_lp * (if k == a { 1.0 } else { 0.0 } - p[k]);
            let d_ent = -p[k] * (lp[k] + h);
            row[k] = -(d_obj + entropy_coef * d_ent) / b;
        }
    }
    let loss = -(obj_sum + entropy_coef * ent_sum) / b;
    (loss, grad, obj_sum / b, ent_sum / b)
}

/// `0.5 · mean (v − R)²` and its gradient with respect to `v`.
pub fn value_loss(values: &Matrix, returns: &[f64]) -> (f64, Matrix) {
    let b = returns.len() as f64;
    let mut grad = Matrix::zeros(values.rows(), 1);
    let mut loss = 0.0;
    for (r, &ret) in returns.iter().enumerate() {
        let d = values.get(r, 0) - ret;
        loss += 0.5 * d * d / b;
        grad.set(r, 0, d / b);
    }
    (loss, grad)
}

pub(crate) fn fit_critic(
    critic: &mut DenseNet,
    opt: &mut Adam,
    batch: &RolloutBatch,
    idx: &[usize],
) -> Result<f64> {
    let x = batch.obs.select_rows(idx);
    let ret: Vec<f64> = idx.iter().map(|&i| batch.returns[i]).collect();
    let (v, tape) = critic.forward(&x)?;
    let (loss, g) = value_loss(&v, &ret);
    check_finite("critic loss", loss)?;
    let (grads, _) = critic.backward(&tape, &g)?;
    opt.step(critic, &grads)?;
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    cfg: PpoConfig,
    actor: DenseNet,
    critic: DenseNet,
    actor_opt: Adam,
    critic_opt: Adam,
    rng: ChaCha8Rng,
    rollout: Rollout,
    updates: u64,
}

impl PpoAgent {
    pub fn new(cfg: PpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = mlp(&cfg.hidden, NUM_ACTIONS, seed::mix(seed, 1))?;
        let critic = mlp(&cfg.hidden, 1, seed::mix(seed, 2))?;
        Ok(Self {
            actor_opt: Adam::new(&actor, cfg.lr_actor),
            critic_opt: Adam::new(&critic, cfg.lr_critic),
            actor,
            critic,
            rng: seed::stream_rng(seed, seed::STREAM_AGENT),
            rollout: Rollout::default(),
            updates: 0,
            cfg,
        })
    }

    pub fn actor(&self) -> &DenseNet {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNet {
        &self.critic
    }

    pub fn action_probs(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(softmax(&self.actor.predict_one(&obs.to_array())?))
    }

    /// Runs the clipped-surrogate update on an already collected rollout.
    pub fn update(&mut self, rollout: &Rollout) -> Result<Diagnostics> {
        let cfg = self.cfg.clone();
        let batch =
            RolloutBatch::build(rollout, &self.actor, &self.critic, cfg.gamma, cfg.lambda, cfg.normalize_advantages)?;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let (mut last_obj, mut last_ent, mut last_vloss) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            for idx in order.chunks(cfg.minibatch) {
                let x = batch.obs.select_rows(idx);
                let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
                let old: Vec<f64> = idx.iter().map(|&i| batch.log_probs_old[i]).collect();
                let adv: Vec<f64> = idx.iter().map(|&i| batch.advantages[i]).collect();
                let (logits, tape) = self.actor.forward(&x)?;
                let (loss, g, obj, ent) = ppo_policy_loss(&logits, &actions, &old, &adv, cfg.clip, cfg.entropy_coef);
                check_finite("ppo policy loss", loss)?;
                let (grads, _) = self.actor.backward(&tape, &g)?;
                self.actor_opt.step(&mut self.actor, &grads)?;
                last_vloss = fit_critic(&mut self.critic, &mut self.critic_opt, &batch, idx)?;
                last_obj = obj;
                last_ent = ent;
            }
        }
        self.updates += 1;

        let logits = self.actor.predict(&batch.obs)?;
        let mut kl = 0.0;
        for r in 0..batch.len() {
            kl += kl_categorical(&batch.probs_old[r], &softmax(logits.row(r))).0;
        }
        let mut d = Diagnostics::new();
        d.insert("update".into(), self.updates as f64);
        d.insert("surrogate".into(), last_obj);
        d.insert("entropy".into(), last_ent);
        d.insert("value_loss".into(), last_vloss);
        d.insert("kl".into(), kl / batch.len().max(1) as f64);
        Ok(d)
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let AgentConfig::Ppo(cfg) = decode_config(dec)? else {
            return Err(Error::Integrity("checkpoint does not hold a ppo agent".into()));
        };
        Ok(Self {
            cfg,
            actor: DenseNet::decode(dec)?,
            critic: DenseNet::decode(dec)?,
            actor_opt: Adam::decode(dec)?,
            critic_opt: Adam::decode(dec)?,
            rng: decode_rng(dec)?,
            rollout: Rollout::decode(dec)?,
            updates: dec.u64()?,
        })
    }
}

impl Agent for PpoAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ppo
    }

    fn begin_episode(&mut self) -> Result<()> {
        self.rollout.clear();
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let p = self.action_probs(obs)?;
        let a = sample_categorical(&p, &mut self.rng);
        self.rollout.push_action(obs, a)?;
        Action::from_index(a)
    }

    fn act_greedy(&self, obs: &Observation) -> Result<Action> {
        Action::from_index(super::policy::argmax(&self.actor.predict_one(&obs.to_array())?))
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        self.rollout.push_outcome(t)
    }

    fn end_episode(&mut self) -> Result<Diagnostics> {
        let mut rollout = std::mem::take(&mut self.rollout);
        rollout.complete_steps();
        if rollout.is_empty() {
            return Ok(Diagnostics::new());
        }
        let d = self.update(&rollout);
        rollout.clear();
        self.rollout = rollout;
        d
    }

    fn param_counts(&self) -> ParamCounts {
        let n = self.actor.param_count() + self.critic.param_count();
        ParamCounts { optimized: n, reported: n }
    }

    fn config(&self) -> AgentConfig {
        AgentConfig::Ppo(self.cfg.clone())
    }

    fn encode(&self, enc: &mut Encoder) {
        encode_config(&self.config(), enc);
        self.actor.encode(enc);
        self.critic.encode(enc);
        self.actor_opt.encode(enc);
        self.critic_opt.encode(enc);
        encode_rng(&self.rng, enc);
        self.rollout.encode(enc);
        enc.u64(self.updates);
    }
}
