//! Rainbow DQN: prioritised replay, n-step returns, a dueling categorical
//! network with a shared trunk, noisy stream layers and double-Q targets.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distributional::{categorical_project, nstep_aggregate, Support};
use super::policy::{argmax, entropy, softmax};
use super::replay::{Experience, PrioritizedBuffer};
use super::{
    check_finite, decode_config, decode_rng, encode_config, encode_rng, obs_batch, Agent, AgentConfig, AgentKind,
    Diagnostics, ParamCounts, TrainPlan,
};
use crate::codec::{Decoder, Encoder};
use crate::env::{Action, Observation, Transition, NUM_ACTIONS, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, DenseNet, Matrix, Tape};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainbowConfig {
    /// Priority exponent α of prioritised replay.
    pub alpha_per: f64,
    /// Initial importance-sampling exponent β, annealed linearly to 1.
    pub beta_per: f64,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    /// Priority floor added to every new priority.
    pub prior_eps: f64,
    pub lr: f64,
    pub gamma: f64,
    pub n_step: usize,
    /// Optimizer steps between hard target synchronisations.
    pub sync_every: usize,
    pub batch: usize,
    pub capacity: usize,
    pub warmup: usize,
    pub train_every: usize,
    pub epsilon_floor: f64,
    pub noisy: bool,
    pub sigma0: f64,
    pub hidden: usize,
}

impl Default for RainbowConfig {
    fn default() -> Self {
        Self {
            alpha_per: 0.3,
            beta_per: 0.7,
            atoms: 25,
            v_min: -6.0,
            v_max: 10.0,
            prior_eps: 1e-4,
            lr: 1e-4,
            gamma: 0.9,
            n_step: 3,
            sync_every: 500,
            batch: 32,
            capacity: 100_000,
            warmup: 1000,
            train_every: 20,
            epsilon_floor: 0.01,
            noisy: true,
            sigma0: 0.5,
            hidden: 128,
        }
    }
}

impl RainbowConfig {
    pub fn validate(&self) -> Result<()> {
        Support::new(self.atoms, self.v_min, self.v_max)?;
        if self.alpha_per < 0.0 || !(0.0..=1.0).contains(&self.beta_per) || !(self.prior_eps > 0.0) {
            return Err(Error::config("rainbow PER parameters need alpha >= 0, beta in [0, 1], prior_eps > 0"));
        }
        if !(self.lr > 0.0) || !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("rainbow.lr > 0 and rainbow.gamma in (0, 1) are required"));
        }
        if self.n_step == 0 || self.sync_every == 0 || self.batch == 0 || self.train_every == 0 || self.hidden == 0 {
            return Err(Error::config("rainbow step counts, batch and width must be positive"));
        }
        if self.capacity < self.batch {
            return Err(Error::config("rainbow.capacity must be at least rainbow.batch"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_floor) || self.sigma0 < 0.0 {
            return Err(Error::config("rainbow.epsilon_floor must lie in [0, 1] and sigma0 >= 0"));
        }
        Ok(())
    }
}

/// Dueling categorical network: shared trunk, value stream (one atom row)
/// and advantage stream (one atom row per action).
#[derive(Debug, Clone, PartialEq)]
pub struct RainbowNet {
    trunk: DenseNet,
    value: DenseNet,
    advantage: DenseNet,
    atoms: usize,
}

/// Taped forward pass of a [`RainbowNet`].
pub struct RainbowTape {
    trunk: Tape,
    value: Tape,
    advantage: Tape,
}

impl RainbowNet {
    pub fn new(hidden: usize, atoms: usize, noisy: Option<f64>, seed: u64) -> Result<Self> {
        let trunk = DenseNet::new(&[OBS_DIM, hidden], Activation::Relu, Activation::Relu, seed::mix(seed, 1))?;
        let mut value =
            DenseNet::new(&[hidden, hidden, atoms], Activation::Relu, Activation::Identity, seed::mix(seed, 2))?;
        let mut advantage = DenseNet::new(
            &[hidden, hidden, NUM_ACTIONS * atoms],
            Activation::Relu,
            Activation::Identity,
            seed::mix(seed, 3),
        )?;
        if let Some(sigma0) = noisy {
            value.make_noisy(sigma0);
            advantage.make_noisy(sigma0);
        }
        Ok(Self { trunk, value, advantage, atoms })
    }

    /// Mean-parameter count (noise scales excluded).
    pub fn param_count(&self) -> usize {
        self.trunk.param_count() + self.value.param_count() + self.advantage.param_count()
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn resample_noise<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.value.resample_noise(rng);
        self.advantage.resample_noise(rng);
    }

    pub fn nets_mut(&mut self) -> [&mut DenseNet; 3] {
        [&mut self.trunk, &mut self.value, &mut self.advantage]
    }

    pub fn nets(&self) -> [&DenseNet; 3] {
        [&self.trunk, &self.value, &self.advantage]
    }

    /// Combines stream outputs into per-action atom logits:
    /// `V_i + A_{a,i} − mean_a A_{a,i}`, laid out action-major.
    pub fn combine(&self, value: &[f64], advantage: &[f64]) -> Vec<f64> {
        let n = self.atoms;
        let mut out = vec![0.0; NUM_ACTIONS * n];
        for i in 0..n {
            let mean = (0..NUM_ACTIONS).map(|a| advantage[a * n + i]).sum::<f64>() / NUM_ACTIONS as f64;
            for a in 0..NUM_ACTIONS {
                out[a * n + i] = value[i] + advantage[a * n + i] - mean;
            }
        }
        out
    }

    fn logits_from(&self, v: &Matrix, adv: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(v.rows(), NUM_ACTIONS * self.atoms);
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&self.combine(v.row(r), adv.row(r)));
        }
        out
    }

    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.trunk.predict(x)?;
        Ok(self.logits_from(&self.value.predict(&h)?, &self.advantage.predict(&h)?))
    }

    pub fn logits_mean(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.trunk.predict_mean(x)?;
        Ok(self.logits_from(&self.value.predict_mean(&h)?, &self.advantage.predict_mean(&h)?))
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, RainbowTape)> {
        let (h, trunk) = self.trunk.forward(x)?;
        let (v, value) = self.value.forward(&h)?;
        let (a, advantage) = self.advantage.forward(&h)?;
        Ok((self.logits_from(&v, &a), RainbowTape { trunk, value, advantage }))
    }

    /// Backpropagates `d loss / d logits` through the dueling combination
    /// and all three sub-networks.
    pub fn backward(&self, tape: &RainbowTape, d_logits: &Matrix) -> Result<[crate::nn::Gradients; 3]> {
        let n = self.atoms;
        let rows = d_logits.rows();
        let mut dv = Matrix::zeros(rows, n);
        let mut da = Matrix::zeros(rows, NUM_ACTIONS * n);
        for r in 0..rows {
            let g = d_logits.row(r);
            for i in 0..n {
                let s: f64 = (0..NUM_ACTIONS).map(|a| g[a * n + i]).sum();
                dv.set(r, i, s);
                for a in 0..NUM_ACTIONS {
                    da.set(r, a * n + i, g[a * n + i] - s / NUM_ACTIONS as f64);
                }
            }
        }
        let (gv, mut dh) = self.value.backward(&tape.value, &dv)?;
        let (ga, dh2) = self.advantage.backward(&tape.advantage, &da)?;
        dh.add_assign(&dh2)?;
        let (gt, _) = self.trunk.backward(&tape.trunk, &dh)?;
        Ok([gt, gv, ga])
    }

    /// Per-action atom distributions of one logits row.
    pub fn distributions(&self, logits_row: &[f64]) -> Vec<Vec<f64>> {
        logits_row.chunks(self.atoms).map(softmax).collect()
    }

    pub fn q_values(&self, logits_row: &[f64], support: &Support) -> [f64; NUM_ACTIONS] {
        let mut q = [0.0; NUM_ACTIONS];
        for (a, d) in self.distributions(logits_row).iter().enumerate() {
            q[a] = support.mean(d);
        }
        q
    }

    fn copy_from(&mut self, other: &RainbowNet) -> Result<()> {
        self.trunk.copy_from(&other.trunk)?;
        self.value.copy_from(&other.value)?;
        self.advantage.copy_from(&other.advantage)
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.atoms);
        self.nets().iter().for_each(|n| n.encode(enc));
    }

    fn decode(dec: &mut Decoder) -> Result<Self> {
        let atoms = dec.usize()?;
        Ok(Self { atoms, trunk: DenseNet::decode(dec)?, value: DenseNet::decode(dec)?, advantage: DenseNet::decode(dec)? })
    }
}

/// Importance-weighted cross-entropy between projected targets and the
/// online distributions of the taken actions. Returns
/// `(loss, per-sample cross-entropy, d loss / d logits)`.
pub fn distributional_loss(
    logits: &Matrix,
    actions: &[usize],
    targets: &[Vec<f64>],
    weights: &[f64],
    atoms: usize,
) -> (f64, Vec<f64>, Matrix) {
    let b = actions.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut ce = Vec::with_capacity(actions.len());
    let mut loss = 0.0;
    for (r, &a) in actions.iter().enumerate() {
        let row = &logits.row(r)[a * atoms..(a + 1) * atoms];
        let lp = super::policy::log_softmax(row);
        let c: f64 = -targets[r].iter().zip(&lp).map(|(m, l)| m * l).sum::<f64>();
        ce.push(c);
        loss += weights[r] * c / b;
        let g = &mut grad.row_mut(r)[a * atoms..(a + 1) * atoms];
        for i in 0..atoms {
            g[i] = weights[r] * (lp[i].exp() - targets[r][i]) / b;
        }
    }
    (loss, ce, grad)
}

#[derive(Debug, Clone)]
pub struct RainbowAgent {
    cfg: RainbowConfig,
    support: Support,
    online: RainbowNet,
    target: RainbowNet,
    opts: [Adam; 3],
    buffer: PrioritizedBuffer,
    window: VecDeque<Experience>,
    rng: ChaCha8Rng,
    total_steps: usize,
    env_steps: u64,
    updates: u64,
    episode_stats: Vec<[f64; 2]>,
}

impl RainbowAgent {
    pub fn new(cfg: RainbowConfig, seed: u64, plan: TrainPlan) -> Result<Self> {
        cfg.validate()?;
        let support = Support::new(cfg.atoms, cfg.v_min, cfg.v_max)?;
        let noisy = cfg.noisy.then_some(cfg.sigma0);
        let mut online = RainbowNet::new(cfg.hidden, cfg.atoms, noisy, seed)?;
        let mut rng = seed::stream_rng(seed, seed::STREAM_AGENT);
        online.resample_noise(&mut rng);
        let target = online.clone();
        let opts = [
            Adam::new(&online.trunk, cfg.lr),
            Adam::new(&online.value, cfg.lr),
            Adam::new(&online.advantage, cfg.lr),
        ];
        Ok(Self {
            buffer: PrioritizedBuffer::new(cfg.capacity, cfg.alpha_per, cfg.prior_eps)?,
            support,
            online,
            target,
            opts,
            window: VecDeque::new(),
            rng,
            total_steps: plan.total_steps.max(1),
            env_steps: 0,
            updates: 0,
            episode_stats: Vec::new(),
            cfg,
        })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn online(&self) -> &RainbowNet {
        &self.online
    }

    pub fn buffer(&self) -> &PrioritizedBuffer {
        &self.buffer
    }

    pub fn beta(&self) -> f64 {
        let frac = (self.env_steps as f64 / self.total_steps as f64).min(1.0);
        self.cfg.beta_per + (1.0 - self.cfg.beta_per) * frac
    }

    /// Greedy Q-values through mean parameters.
    pub fn q_values_mean(&self, obs: &Observation) -> Result<[f64; NUM_ACTIONS]> {
        let logits = self.online.logits_mean(&Matrix::row_vector(&obs.to_array()))?;
        Ok(self.online.q_values(logits.row(0), &self.support))
    }

    fn push_window(&mut self, flush: bool) -> Result<()> {
        let n = self.cfg.n_step;
        while self.window.len() >= n || (flush && !self.window.is_empty()) {
            let w: Vec<Experience> = self.window.iter().copied().collect();
            let agg = nstep_aggregate(&w, n, self.cfg.gamma)?;
            self.buffer.push(agg);
            self.window.pop_front();
        }
        Ok(())
    }

    /// Projected n-step targets for a batch, using double-Q action selection.
    fn targets(&self, batch: &[Experience]) -> Result<Vec<Vec<f64>>> {
        let next: Vec<[f64; OBS_DIM]> = batch.iter().map(|e| e.next_obs).collect();
        let xn = obs_batch(&next);
        let online_next = self.online.logits(&xn)?;
        let target_next = self.target.logits(&xn)?;
        let discount = self.cfg.gamma.powi(self.cfg.n_step as i32);
        let atoms = self.cfg.atoms;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(r, e)| {
                let a_star = argmax(&self.online.q_values(online_next.row(r), &self.support));
                let p = softmax(&target_next.row(r)[a_star * atoms..(a_star + 1) * atoms]);
                categorical_project(&p, e.reward, discount, e.done, &self.support)
            })
            .collect())
    }

    /// One prioritised update. Returns `[loss, mean entropy of the taken
    /// action's distribution]`.
    pub fn train_step(&mut self) -> Result<[f64; 2]> {
        let sample = self.buffer.sample(self.cfg.batch, self.beta(), &mut self.rng)?;
        self.online.resample_noise(&mut self.rng);
        self.target.resample_noise(&mut self.rng);
        let targets = self.targets(&sample.items)?;
        let obs: Vec<[f64; OBS_DIM]> = sample.items.iter().map(|e| e.obs).collect();
        let actions: Vec<usize> = sample.items.iter().map(|e| e.action).collect();
        let (logits, tape) = self.online.forward(&obs_batch(&obs))?;
        let (loss, ce, grad) = distributional_loss(&logits, &actions, &targets, &sample.weights, self.cfg.atoms);
        check_finite("rainbow loss", loss)?;
        let grads = self.online.backward(&tape, &grad)?;
        for ((opt, net), g) in self.opts.iter_mut().zip(self.online.nets_mut()).zip(grads.iter()) {
            opt.step(net, g)?;
        }
        let priorities: Vec<f64> = ce.iter().map(|c| c.abs() + self.cfg.prior_eps).collect();
        self.buffer.update_priorities(&sample.indices, &priorities)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.sync_every as u64) {
            self.target.copy_from(&self.online)?;
        }
        let atoms = self.cfg.atoms;
        let ent = actions
            .iter()
            .enumerate()
            .map(|(r, &a)| entropy(&softmax(&logits.row(r)[a * atoms..(a + 1) * atoms])))
            .sum::<f64>()
            / actions.len() as f64;
        Ok([loss, ent])
    }

    pub fn decode(dec: &mut Decoder) -> Result<Self> {
        let AgentConfig::Rainbow(cfg) = decode_config(dec)? else {
            return Err(Error::Integrity("checkpoint does not hold a rainbow agent".into()));
        };
        let support = Support::new(cfg.atoms, cfg.v_min, cfg.v_max)?;
        let online = RainbowNet::decode(dec)?;
        let target = RainbowNet::decode(dec)?;
        let opts = [Adam::decode(dec)?, Adam::decode(dec)?, Adam::decode(dec)?];
        let buffer = PrioritizedBuffer::decode(dec)?;
        let n = dec.usize()?;
        let mut window = VecDeque::with_capacity(n);
        for _ in 0..n {
            window.push_back(decode_experience(dec)?);
        }
        Ok(Self {
            cfg,
            support,
            online,
            target,
            opts,
            buffer,
            window,
            rng: decode_rng(dec)?,
            total_steps: dec.usize()?,
            env_steps: dec.u64()?,
            updates: dec.u64()?,
            episode_stats: Vec::new(),
        })
    }
}

fn encode_experience(e: &Experience, enc: &mut Encoder) {
    e.obs.iter().for_each(|&v| enc.f64(v));
    enc.usize(e.action);
    enc.f64(e.reward);
    e.next_obs.iter().for_each(|&v| enc.f64(v));
    enc.bool(e.done);
}

fn decode_experience(dec: &mut Decoder) -> Result<Experience> {
    let mut obs = [0.0; OBS_DIM];
    for v in &mut obs {
        *v = dec.f64()?;
    }
    let action = dec.usize()?;
    let reward = dec.f64()?;
    let mut next_obs = [0.0; OBS_DIM];
    for v in &mut next_obs {
        *v = dec.f64()?;
    }
    Ok(Experience { obs, action, reward, next_obs, done: dec.bool()? })
}

impl Agent for RainbowAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Rainbow
    }

    fn begin_episode(&mut self) -> Result<()> {
        self.window.clear();
        self.online.resample_noise(&mut self.rng);
        Ok(())
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let explore = (self.env_steps as usize) < self.cfg.warmup || self.rng.random::<f64>() < self.cfg.epsilon_floor;
        if explore {
            return Action::from_index(self.rng.random_range(0..NUM_ACTIONS));
        }
        let logits = self.online.logits(&Matrix::row_vector(&obs.to_array()))?;
        Action::from_index(argmax(&self.online.q_values(logits.row(0), &self.support)))
    }

    fn act_greedy(&self, obs: &Observation) -> Result<Action> {
        Action::from_index(argmax(&self.q_values_mean(obs)?))
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        self.window.push_back(Experience::from_transition(t));
        self.push_window(t.done)?;
        self.env_steps += 1;
        let ready = self.env_steps as usize >= self.cfg.warmup && self.buffer.len() >= self.cfg.batch;
        if ready && self.env_steps.is_multiple_of(self.cfg.train_every as u64) {
            let s = self.train_step()?;
            self.episode_stats.push(s);
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<Diagnostics> {
        self.push_window(true)?;
        let mut d = Diagnostics::new();
        d.insert("updates".into(), self.updates as f64);
        d.insert("mean_priority".into(), self.buffer.mean_priority());
        d.insert("beta".into(), self.beta());
        if !self.episode_stats.is_empty() {
            let n = self.episode_stats.len() as f64;
            d.insert("loss".into(), self.episode_stats.iter().map(|s| s[0]).sum::<f64>() / n);
            d.insert("entropy".into(), self.episode_stats.iter().map(|s| s[1]).sum::<f64>() / n);
        }
        self.episode_stats.clear();
        Ok(d)
    }

    fn param_counts(&self) -> ParamCounts {
        let n = self.online.param_count();
        ParamCounts { optimized: n, reported: n }
    }

    fn config(&self) -> AgentConfig {
        AgentConfig::Rainbow(self.cfg.clone())
    }

    fn encode(&self, enc: &mut Encoder) {
        encode_config(&self.config(), enc);
        self.online.encode(enc);
        self.target.encode(enc);
        self.opts.iter().for_each(|o| o.encode(enc));
        self.buffer.encode(enc);
        enc.usize(self.window.len());
        self.window.iter().for_each(|e| encode_experience(e, enc));
        encode_rng(&self.rng, enc);
        enc.usize(self.total_steps);
        enc.u64(self.env_steps);
        enc.u64(self.updates);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn support() -> Support {
        Support::new(25, -6.0, 10.0).unwrap()
    }

    #[test]
    fn default_network_has_reference_count() {
        let net = RainbowNet::new(128, 25, None, 0).unwrap();
        assert_eq!(net.param_count(), 62_689);
        let noisy = RainbowNet::new(128, 25, Some(0.5), 0).unwrap();
        assert_eq!(noisy.param_count(), 62_689);
    }

    #[test]
    fn identical_advantages_give_identical_distributions() {
        let net = RainbowNet::new(8, 5, None, 0).unwrap();
        let v = [0.1, 0.4, -0.3, 0.0, 0.2];
        let mut adv = vec![0.0; NUM_ACTIONS * 5];
        for a in 0..NUM_ACTIONS {
            adv[a * 5..(a + 1) * 5].copy_from_slice(&[0.5, -0.5, 0.1, 0.3, 0.0]);
        }
        let d = net.distributions(&net.combine(&v, &adv));
        for a in 1..NUM_ACTIONS {
            for i in 0..5 {
                assert!((d[a][i] - d[0][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn value_shift_leaves_distributions_unchanged() {
        let net = RainbowNet::new(8, 5, None, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let adv: Vec<f64> = (0..NUM_ACTIONS * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.7).collect();
        let (a, b) = (net.distributions(&net.combine(&v, &adv)), net.distributions(&net.combine(&shifted, &adv)));
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn q_values_lie_inside_support_and_distributions_are_valid() {
        let s = support();
        let net = RainbowNet::new(16, 25, Some(0.5), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let logits = net.logits(&Matrix::row_vector(&x)).unwrap();
            for d in net.distributions(logits.row(0)) {
                assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6 && d.iter().all(|&p| p >= 0.0));
            }
            for q in net.q_values(logits.row(0), &s) {
                assert!((s.v_min()..=s.v_max()).contains(&q));
            }
        }
    }

    #[test]
    fn dueling_backward_matches_fd() {
        let mut net = RainbowNet::new(6, 4, Some(0.5), 2).unwrap();
        net.resample_noise(&mut ChaCha8Rng::seed_from_u64(1));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Matrix::from_vec(2, OBS_DIM, (0..2 * OBS_DIM).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let c = Matrix::from_vec(2, NUM_ACTIONS * 4, (0..2 * NUM_ACTIONS * 4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let f = |n: &RainbowNet| -> f64 { n.logits(&x).unwrap().data().iter().zip(c.data()).map(|(a, b)| a * b).sum() };
        let (_, tape) = net.forward(&x).unwrap();
        let grads = net.backward(&tape, &c).unwrap();
        let h = 1e-6;
        for which in 0..3 {
            let analytic = grads[which].to_flat();
            let base = net.nets()[which].flat_params();
            for k in (0..base.len()).step_by(7) {
                let mut p = base.clone();
                p[k] += h;
                let mut plus = net.clone();
                plus.nets_mut()[which].set_flat_params(&p).unwrap();
                p[k] -= 2.0 * h;
                let mut minus = net.clone();
                minus.nets_mut()[which].set_flat_params(&p).unwrap();
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                assert!((fd - analytic[k]).abs() < 1e-5 * (1.0 + fd.abs()), "net {which} param {k}");
            }
        }
    }

    #[test]
    fn self_consistent_target_has_zero_kl_gradient() {
        let logits = Matrix::from_rows(&[[0.2, -0.1, 0.4, 0.0, 0.3, 0.1, -0.2, 0.5]]);
        let p = softmax(&logits.row(0)[2..4]);
        let (_, ce, grad) = distributional_loss(&logits, &[1], &[p.clone()], &[1.0], 2);
        assert!((ce[0] - entropy(&p)).abs() < 1e-15);
        assert!(grad.data().iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn handcrafted_two_sample_loss() {
        // atoms = 2, logits for the taken actions chosen so the softmaxes are simple.
        let mut logits = Matrix::zeros(2, NUM_ACTIONS * 2);
        logits.set(0, 0, 0.0);
        logits.set(0, 1, 2f64.ln()); // action 0: p = (1/3, 2/3)
        logits.set(1, 6, 0.0);
        logits.set(1, 7, 0.0); // action 3: p = (1/2, 1/2)
        let targets = vec![vec![1.0, 0.0], vec![0.25, 0.75]];
        let weights = [1.0, 0.5];
        let (loss, ce, _) = distributional_loss(&logits, &[0, 3], &targets, &weights, 2);
        let ce0 = -(1.0f64 / 3.0).ln();
        let ce1 = -(0.25 * 0.5f64.ln() + 0.75 * 0.5f64.ln());
        assert!((ce[0] - ce0).abs() < 1e-14 && (ce[1] - ce1).abs() < 1e-14);
        assert!((loss - (ce0 + 0.5 * ce1) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn priorities_respect_floor_after_updates() {
        let cfg = RainbowConfig { warmup: 40, batch: 8, hidden: 16, train_every: 1, ..RainbowConfig::default() };
        let mut agent = RainbowAgent::new(cfg, 1, TrainPlan { total_steps: 200 }).unwrap();
        let mut env = crate::env::HandoverEnv::new(crate::env::SimConfig::default(), crate::track::Scenario::One, 3).unwrap();
        agent.begin_episode().unwrap();
        for _ in 0..120 {
            let obs = env.observation();
            let a = agent.act(&obs).unwrap();
            let t = env.step(a).unwrap();
            agent.observe(&t).unwrap();
        }
        assert!(agent.updates > 0);
        for i in 0..agent.buffer().len() {
            assert!(agent.buffer().priority(i) >= 1e-4);
        }
        assert!(agent.buffer().tree().is_consistent());
    }

    #[test]
    fn greedy_actions_are_deterministic_for_frozen_net() {
        let cfg = RainbowConfig { epsilon_floor: 0.0, hidden: 16, ..RainbowConfig::default() };
        let agent = RainbowAgent::new(cfg, 2, TrainPlan { total_steps: 10 }).unwrap();
        let obs = Observation::from_array([0.01, 0.0, 1.0, 0.0]);
        let a = agent.act_greedy(&obs).unwrap();
        for _ in 0..10 {
            assert_eq!(agent.act_greedy(&obs).unwrap(), a);
        }
    }
}
