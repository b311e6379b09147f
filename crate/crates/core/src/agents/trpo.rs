//! Trust-region policy optimisation: natural-gradient step via conjugate
//! gradient on Fisher-vector products, then a backtracking line search that
//! enforces the KL bound.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{argmax, entropy, kl_categorical, log_softmax, sample_categorical, softmax};
use super::ppo::{fit_critic, validate_discounts, RolloutBatch};
use super::rollout::Rollout;
use super::{
    decode_config, decode_rng, encode_config, encode_rng, mlp, Agent, AgentConfig, AgentKind, Diagnostics,
    ParamCounts,
};
use crate::codec::{Decoder, Encoder};
use crate::env::{Action, Observation, Transition, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{dot, Adam, DenseNet, Matrix};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrpoConfig {
    /// KL bound δ.
    pub max_kl: f64,
    pub hidden_width: usize,
    pub line_search_iters: usize,
    pub cg_iters: usize,
    pub damping: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub normalize_advantages: bool,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub critic_minibatch: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self {
            max_kl: 0.005,
            hidden_width: 64,
            line_search_iters: 20,
            cg_iters: 10,
            damping: 0.1,
            gamma: 0.99,
            lambda: 0.95,
            normalize_advantages: true,
            critic_lr: 1e-3,
            critic_epochs: 5,
            critic_minibatch: 256,
        }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_kl > 0.0) {
            return Err(Error::config("trpo.max_kl must be positive"));
        }
        if self.hidden_width == 0 || self.line_search_iters == 0 || self.cg_iters == 0 {
            return Err(Error::config("trpo widths and iteration counts must be positive"));
        }
        if self.damping < 0.0 || !(self.critic_lr > 0.0) {
            return Err(Error::config("trpo.damping must be >= 0 and trpo.critic_lr > 0"));
        }
        if self.critic_epochs == 0 || self.critic_minibatch == 0 {
            return Err(Error::config("trpo critic epochs and minibatch must be positive"));
        }
        validate_discounts("trpo", self.gamma, self.lambda)
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` given only `v ↦ A v`.
/// Stops early once the residual norm falls below `tol`.
pub fn conjugate_gradient<F>(mut apply: F, b: &[f64], iters: usize, tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr.sqrt() <= tol {
            break;
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::Training(format!("conjugate gradient breakdown (pᵀAp = {pap})")));
        }
        let alpha = rr / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if !rr_new.is_finite() {
            return Err(Error::Training("non-finite conjugate gradient residual".into()));
        }
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Ok(x)
}

/// Outcome of one trust-region update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrpoStep {
    pub accepted: bool,
    /// Mean `KL(π_old ‖ π_new)` of the applied step (0 when rejected).
    pub kl: f64,
    /// Surrogate improvement of the applied step (0 when rejected).
    pub improvement: f64,
    pub backtracks: usize,
}

/// Surrogate `mean(π_θ(a|s)/π_old(a|s) · A)` and mean KL from the old policy.
fn surrogate_and_kl(logits: &Matrix, batch: &RolloutBatch) -> (f64, f64) {
    let n = batch.len() as f64;
    let (mut surr, mut kl) = (0.0, 0.0);
    for r in 0..batch.len() {
        let lp = log_softmax(logits.row(r));
        let a = batch.actions[r];
        surr += (lp[a] - batch.log_probs_old[r]).exp() * batch.advantages[r];
        let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
        kl += kl_categorical(&batch.probs_old[r], &p).0;
    }
    (surr / n, kl / n)
}

/// One KL-constrained natural-gradient step of `actor` on `batch`.
pub fn trpo_update(actor: &mut DenseNet, batch: &RolloutBatch, cfg: &TrpoConfig) -> Result<TrpoStep> {
    let n = batch.len() as f64;
    let rejected = TrpoStep { accepted: false, kl: 0.0, improvement: 0.0, backtracks: 0 };
    let (logits, tape) = actor.forward(&batch.obs)?;
    let (surr_old, _) = surrogate_and_kl(&logits, batch);

    // ∂L/∂logits at θ_old: A·(e_a − π)/n.
    let mut g_logits = Matrix::zeros(batch.len(), NUM_ACTIONS);
    for r in 0..batch.len() {
        let p = &batch.probs_old[r];
        let a = batch.actions[r];
        let adv = batch.advantages[r];
        for (k, g) in g_logits.row_mut(r).iter_mut().enumerate() {
            *g = adv * (if k == a { 1.0 } else { 0.0 } - p[k]) / n;
        }
    }
    let (grads, _) = actor.backward(&tape, &g_logits)?;
    let g = grads.to_flat();
    if g.iter().all(|&v| v == 0.0) {
        return Ok(rejected);
    }

    let mut tangent = actor.zero_grads();
    let fisher = |v: &[f64]| -> Result<Vec<f64>> {
        tangent.set_flat(v)?;
        let u = actor.jvp(&tape, &tangent)?;
        let mut w = Matrix::zeros(u.rows(), u.cols());
        for r in 0..u.rows() {
            let p = &batch.probs_old[r];
            let ur = u.row(r);
            let mean: f64 = p.iter().zip(ur).map(|(a, b)| a * b).sum();
            for (k, wk) in w.row_mut(r).iter_mut().enumerate() {
                *wk = p[k] * (ur[k] - mean) / n;
            }
        }
        let (fv, _) = actor.backward(&tape, &w)?;
        let mut fv = fv.to_flat();
        for (f, x) in fv.iter_mut().zip(v) {
            *f += cfg.damping * x;
        }
        Ok(fv)
    };
    let mut fisher = fisher;
    let x = conjugate_gradient(&mut fisher, &g, cfg.cg_iters, 1e-10)?;
    let xfx = dot(&x, &fisher(&x)?);
    if !(xfx > 0.0) || !xfx.is_finite() {
        return Ok(rejected);
    }
    let scale = (2.0 * cfg.max_kl / xfx).sqrt();

    let theta_old = actor.flat_params();
    let mut frac = 1.0;
    for k in 0..cfg.line_search_iters {
        let theta: Vec<f64> = theta_old.iter().zip(&x).map(|(t, d)| t + frac * scale * d).collect();
        actor.set_flat_params(&theta)?;
        let logits = actor.predict(&batch.obs)?;
        let (surr, kl) = surrogate_and_kl(&logits, batch);
        let improvement = surr - surr_old;
        if kl.is_finite() && improvement.is_finite() && kl <= cfg.max_kl && improvement >= 0.0 {
            return Ok(TrpoStep { accepted: true, kl, improvement, backtracks: k });
        }
        frac *= 0.5;
    }
    actor.set_flat_params(&theta_old)?;
    Ok(TrpoStep { backtracks: cfg.line_search_iters, ..rejected })
}

#[derive(Debug, Clone)]
pub struct TrpoAgent {
    cfg: TrpoConfig,
    actor: DenseNet,
    critic: DenseNet,
    critic_opt: Adam,
    rng: ChaCha8Rng,
    rollout: Rollout,
    updates: u64,
}

impl TrpoAgent {
    pub fn new(cfg: TrpoConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = mlp(&[cfg.hidden_width], NUM_ACTIONS, seed::mix(seed, 1))?;
        let critic = mlp(&[cfg.hidden_width], 1, seed::mix(seed, 2))?;
        Ok(Self {
            critic_opt: Adam::new(&critic, cfg.critic_lr),
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

    pub fn update(&mut self, rollout: &Rollout) -> Result<Diagnostics> {
        let cfg = self.cfg.clone();
        let batch =
            RolloutBatch::build(rollout, &self.actor, &self.critic, cfg.gamma, cfg.lambda, cfg.normalize_advantages)?;
        let step = trpo_update(&mut self.actor, &batch, &cfg)?;

        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut vloss = 0.0;
        for _ in 0..cfg.critic_epochs {
            order.shuffle(&mut self.rng);
            for idx in order.chunks(cfg.critic_minibatch) {
                vloss = fit_critic(&mut self.critic, &mut self.critic_opt, &batch, idx)?;
            }
        }
        self.updates += 1;

        let ent = batch.probs_old.iter().map(|p| entropy(p)).sum::<f64>() / batch.len().max(1) as f64;
        let mut d = Diagnostics::new();
        d.insert("update".into(), self.updates as f64);
        d.insert("accepted".into(), if step.accepted { 1.0 } else { 0.0 });
        d.insert("kl".into(), step.kl);
        d.insert("surrogate_delta".into(), step.improvement);
        d.insert("backtracks".into(), step.backtracks as f64);
        d.insert("entropy".into(), ent);
        d.insert("value_loss".into(), vloss);
        Ok(d)
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let AgentConfig::Trpo(cfg) = decode_config(dec)? else {
            return Err(Error::Integrity("checkpoint does not hold a trpo agent".into()));
        };
        Ok(Self {
            cfg,
            actor: DenseNet::decode(dec)?,
            critic: DenseNet::decode(dec)?,
            critic_opt: Adam::decode(dec)?,
            rng: decode_rng(dec)?,
            rollout: Rollout::decode(dec)?,
            updates: dec.u64()?,
        })
    }
}

impl Agent for TrpoAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Trpo
    }

    fn begin_episode(&mut self) -> Result<()> {
        self.rollout.clear();
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let p = softmax(&self.actor.predict_one(&obs.to_array())?);
        let a = sample_categorical(&p, &mut self.rng);
        self.rollout.push_action(obs, a)?;
        Action::from_index(a)
    }

    fn act_greedy(&self, obs: &Observation) -> Result<Action> {
        Action::from_index(argmax(&self.actor.predict_one(&obs.to_array())?))
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
        AgentConfig::Trpo(self.cfg.clone())
    }

    fn encode(&self, enc: &mut Encoder) {
        encode_config(&self.config(), enc);
        self.actor.encode(enc);
        self.critic.encode(enc);
        self.critic_opt.encode(enc);
        encode_rng(&self.rng, enc);
        self.rollout.encode(enc);
        enc.u64(self.updates);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};

    /// Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn cg_matches_dense_solve_on_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let m: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let a: Vec<Vec<f64>> = (0..6)
                .map(|i| {
                    (0..6)
                        .map(|j| (0..6).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.5 } else { 0.0 })
                        .collect()
                })
                .collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let apply = |v: &[f64]| Ok(a.iter().map(|row| dot(row, v)).collect());
            let x = conjugate_gradient(apply, &b, 50, 1e-14).unwrap();
            let oracle = dense_solve(a.clone(), b.clone());
            for (p, q) in x.iter().zip(&oracle) {
                assert!((p - q).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cg_reports_breakdown() {
        let apply = |v: &[f64]| Ok(v.iter().map(|x| -x).collect());
        assert!(matches!(conjugate_gradient(apply, &[1.0, 2.0], 5, 0.0), Err(Error::Training(_))));
    }

    fn toy_batch(actor: &DenseNet, advantages: Vec<f64>, seed: u64) -> RolloutBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = advantages.len();
        let mut rollout = Rollout::default();
        for _ in 0..n {
            let o = Observation::from_array([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]);
            let p = softmax(&actor.predict_one(&o.to_array()).unwrap());
            rollout.obs.push(o.to_array());
            rollout.actions.push(sample_categorical(&p, &mut rng));
            rollout.rewards.push(0.0);
            rollout.dones.push(false);
        }
        let critic = DenseNet::new(&[4, 1], Activation::Identity, Activation::Identity, 0).unwrap();
        let mut b = RolloutBatch::build(&rollout, actor, &critic, 0.99, 0.95, false).unwrap();
        b.advantages = advantages;
        b
    }

    #[test]
    fn zero_advantages_leave_policy_unchanged() {
        let mut actor = mlp(&[16], NUM_ACTIONS, 3).unwrap();
        let before = actor.flat_params();
        let batch = toy_batch(&actor, vec![0.0; 64], 1);
        let step = trpo_update(&mut actor, &batch, &TrpoConfig::default()).unwrap();
        assert!(!step.accepted);
        assert_eq!(actor.flat_params(), before);
    }

    #[test]
    fn accepted_steps_respect_kl_and_improve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut actor = mlp(&[32], NUM_ACTIONS, 5).unwrap();
        let cfg = TrpoConfig::default();
        let mut accepted = 0;
        for it in 0..10 {
            let adv: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let batch = toy_batch(&actor, adv, it);
            let step = trpo_update(&mut actor, &batch, &cfg).unwrap();
            if step.accepted {
                accepted += 1;
                assert!(step.kl <= cfg.max_kl);
                assert!(step.improvement >= 0.0);
                let (surr, kl) = surrogate_and_kl(&actor.predict(&batch.obs).unwrap(), &batch);
                assert!((kl - step.kl).abs() < 1e-15);
                let mean_adv = batch.advantages.iter().sum::<f64>() / 256.0;
                assert!(surr >= mean_adv - 1e-12);
            }
        }
        assert!(accepted > 0);
    }

    #[test]
    fn fisher_product_matches_kl_hessian_fd() {
        // vᵀ F v equals the second directional derivative of the mean KL.
        let actor = mlp(&[8], NUM_ACTIONS, 9).unwrap();
        let batch = toy_batch(&actor, vec![1.0; 16], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v: Vec<f64> = (0..actor.flat_params().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, tape) = actor.forward(&batch.obs).unwrap();
        let mut tangent = actor.zero_grads();
        tangent.set_flat(&v).unwrap();
        let u = actor.jvp(&tape, &tangent).unwrap();
        let n = batch.len() as f64;
        let mut w = Matrix::zeros(u.rows(), u.cols());
        for r in 0..u.rows() {
            let p = &batch.probs_old[r];
            let mean: f64 = p.iter().zip(u.row(r)).map(|(a, b)| a * b).sum();
            for k in 0..NUM_ACTIONS {
                w.set(r, k, p[k] * (u.get(r, k) - mean) / n);
            }
        }
        let fv = actor.backward(&tape, &w).unwrap().0.to_flat();
        let vfv = dot(&v, &fv);
        let h = 1e-4;
        let kl_at = |s: f64| {
            let mut a = actor.clone();
            let t: Vec<f64> = actor.flat_params().iter().zip(&v).map(|(x, d)| x + s * d).collect();
            a.set_flat_params(&t).unwrap();
            surrogate_and_kl(&a.predict(&batch.obs).unwrap(), &batch).1
        };
        let second = (kl_at(h) - 2.0 * kl_at(0.0) + kl_at(-h)) / (h * h);
        assert!((second - vfv).abs() < 1e-4 * (1.0 + vfv.abs()), "{second} vs {vfv}");
    }

    #[test]
    fn parameter_count_matches_reference() {
        assert_eq!(TrpoAgent::new(TrpoConfig::default(), 0).unwrap().param_counts().optimized, 1225);
    }
}
