//! The training episode loop, with best-so-far tracking and exact resume.

use serde::{Deserialize, Serialize};

use super::metrics::{Metrics, MetricsAccumulator};
use crate::agents::{build_agent, Agent, AgentConfig, Diagnostics, TrainPlan};
use crate::checkpoint::Checkpoint;
use crate::codec::{Decoder, Encoder};
use crate::env::{HandoverEnv, SimConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::track::Scenario;

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub agent: AgentConfig,
    pub sim: SimConfig,
    pub scenario: Scenario,
    pub seed: u64,
    pub episodes: usize,
}

impl RunSpec {
    pub fn plan(&self) -> TrainPlan {
        TrainPlan { total_steps: self.episodes * self.sim.environment.horizon() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Zero-based.
    pub episode: usize,
    pub episode_return: f64,
    /// Metrics of the exploratory training episode.
    pub metrics: Metrics,
    pub diagnostics: Diagnostics,
}

impl EpisodeRecord {
    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.usize(self.episode);
        enc.f64(self.episode_return);
        let m = &self.metrics;
        enc.usize(m.steps);
        for v in [m.reliability, m.vlc_utilization, m.headlight_rate, m.no_redundancy, m.taillight_rate] {
            enc.f64(v);
        }
        enc.usize(m.switch_count);
        enc.f64(m.mean_return);
        enc.usize(self.diagnostics.len());
        for (k, v) in &self.diagnostics {
            enc.str(k);
            enc.f64(*v);
        }
    }

    pub(crate) fn decode(dec: &mut Decoder) -> Result<Self> {
        let episode = dec.usize()?;
        let episode_return = dec.f64()?;
        let metrics = Metrics {
            steps: dec.usize()?,
            reliability: dec.f64()?,
            vlc_utilization: dec.f64()?,
            headlight_rate: dec.f64()?,
            no_redundancy: dec.f64()?,
            taillight_rate: dec.f64()?,
            switch_count: dec.usize()?,
            mean_return: dec.f64()?,
        };
        let n = dec.usize()?;
        let mut diagnostics = Diagnostics::new();
        for _ in 0..n {
            let k = dec.string()?;
            diagnostics.insert(k, dec.f64()?);
        }
        Ok(Self { episode, episode_return, metrics, diagnostics })
    }
}

/// Runs episodes of one (agent, seed) pair.
pub struct Trainer {
    spec: RunSpec,
    env: HandoverEnv,
    agent: Box<dyn Agent>,
    history: Vec<EpisodeRecord>,
    best_return: f64,
    best: Option<Checkpoint>,
}

impl Trainer {
    pub fn new(spec: RunSpec) -> Result<Self> {
        let agent = build_agent(&spec.agent, spec.seed, spec.plan())?;
        let env = HandoverEnv::new(spec.sim.clone(), spec.scenario, seed::episode_seed(spec.seed, 0))?;
        Ok(Self { spec, env, agent, history: Vec::new(), best_return: f64::NEG_INFINITY, best: None })
    }

    /// Continues a run from an episode-boundary checkpoint. The resumed run
    /// is step-for-step identical to the uninterrupted one.
    pub fn resume(spec: RunSpec, ckpt: &Checkpoint) -> Result<Self> {
        let agent = ckpt.restore_agent()?;
        if agent.config() != spec.agent {
            return Err(Error::config("checkpoint agent configuration differs from the run configuration"));
        }
        let env = HandoverEnv::new(spec.sim.clone(), spec.scenario, seed::episode_seed(spec.seed, 0))?;
        let best_return = ckpt.history.iter().map(|r| r.episode_return).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { spec, env, agent, history: ckpt.history.clone(), best_return, best: None })
    }

    /// Restores the best-so-far checkpoint saved alongside a resume point.
    pub fn with_best(mut self, best: Checkpoint) -> Self {
        self.best = Some(best);
        self
    }

    pub fn spec(&self) -> &RunSpec {
        &self.spec
    }

    pub fn agent(&self) -> &dyn Agent {
        self.agent.as_ref()
    }

    pub fn history(&self) -> &[EpisodeRecord] {
        &self.history
    }

    pub fn returns(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.episode_return).collect()
    }

    pub fn is_finished(&self) -> bool {
        self.history.len() >= self.spec.episodes
    }

    /// State at the current episode boundary.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(self.agent.as_ref(), &self.history)
    }

    /// Best-so-far checkpoint; after a resume only if supplied via [`Trainer::with_best`].
    pub fn best_checkpoint(&self) -> Option<&Checkpoint> {
        self.best.as_ref()
    }

    pub fn run_episode(&mut self) -> Result<&EpisodeRecord> {
        let episode = self.history.len();
        let context = |e: Error| match e {
            Error::Training(msg) => Error::Training(format!("seed {} episode {episode}: {msg}", self.spec.seed)),
            Error::NonFinite { context, layer } => {
                Error::Training(format!("seed {} episode {episode}: non-finite {context} (layer {layer})", self.spec.seed))
            }
            other => other,
        };
        let mut obs = self.env.reset(self.spec.scenario, seed::episode_seed(self.spec.seed, episode))?;
        self.agent.begin_episode().map_err(context)?;
        let mut acc = MetricsAccumulator::default();
        loop {
            let action = self.agent.act(&obs).map_err(context)?;
            let t = self.env.step(action)?;
            acc.push((&t).into());
            self.agent.observe(&t).map_err(context)?;
            obs = t.next_obs;
            if t.done {
                break;
            }
        }
        let diagnostics = self.agent.end_episode().map_err(context)?;
        let metrics = acc.finish()?;
        let record = EpisodeRecord { episode, episode_return: metrics.mean_return, metrics, diagnostics };
        self.history.push(record);
        if metrics.mean_return > self.best_return {
            self.best_return = metrics.mean_return;
            self.best = Some(self.checkpoint());
        }
        Ok(self.history.last().expect("just pushed"))
    }

    /// Runs until `spec.episodes` episodes are complete.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.run_episode()?;
        }
        Ok(())
    }

    /// Runs until `episodes` episodes are complete (capped by the budget).
    pub fn run_until(&mut self, episodes: usize) -> Result<()> {
        while self.history.len() < episodes.min(self.spec.episodes) {
            self.run_episode()?;
        }
        Ok(())
    }
}

/// Result of a whole run. A failed run keeps the history up to the failure.
pub struct RunOutcome {
    pub spec: RunSpec,
    pub history: Vec<EpisodeRecord>,
    pub final_checkpoint: Option<Checkpoint>,
    pub best_checkpoint: Option<Checkpoint>,
    pub failure: Option<String>,
}

impl RunOutcome {
    pub fn returns(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.episode_return).collect()
    }
}

/// Trains one agent for `spec.episodes` episodes. Divergence is reported in
/// `failure` rather than as an error so that sibling runs are unaffected.
pub fn train_run(spec: RunSpec) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(spec)?;
    let failure = match trainer.run() {
        Ok(()) => None,
        Err(Error::Training(msg)) => Some(msg),
        Err(e) => return Err(e),
    };
    Ok(RunOutcome {
        final_checkpoint: failure.is_none().then(|| trainer.checkpoint()),
        best_checkpoint: trainer.best.take(),
        history: std::mem::take(&mut trainer.history),
        spec: trainer.spec,
        failure,
    })
}
