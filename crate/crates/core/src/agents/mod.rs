//! Deep RL agents behind one episode-loop interface.
//!
//! The harness drives every agent the same way: `begin_episode`, then
//! `act`/`observe` once per environment step, then `end_episode`. On-policy
//! agents update inside `end_episode`; off-policy agents update from
//! `observe` on their own schedule.

pub mod distributional;
pub mod policy;
pub mod ppo;
pub mod rainbow;
pub mod replay;
pub mod rollout;
pub mod sac;
pub mod trpo;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::env::{Action, Observation, Transition, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseNet};

pub use ppo::{PpoAgent, PpoConfig};
pub use rainbow::{RainbowAgent, RainbowConfig};
pub use sac::{SacAgent, SacConfig};
pub use trpo::{TrpoAgent, TrpoConfig};

/// Named scalar diagnostics from one update or episode.
pub type Diagnostics = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ppo,
    Trpo,
    Sac,
    Rainbow,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Ppo, AgentKind::Trpo, AgentKind::Sac, AgentKind::Rainbow];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ppo => "ppo",
            AgentKind::Trpo => "trpo",
            AgentKind::Sac => "sac",
            AgentKind::Rainbow => "rainbow",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(AgentKind::Ppo),
            "trpo" => Ok(AgentKind::Trpo),
            "sac" => Ok(AgentKind::Sac),
            "rainbow" => Ok(AgentKind::Rainbow),
            other => Err(Error::config(format!("unknown agent `{other}` (expected ppo, trpo, sac or rainbow)"))),
        }
    }
}

/// Hyperparameters for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AgentConfig {
    Ppo(PpoConfig),
    Trpo(TrpoConfig),
    Sac(SacConfig),
    Rainbow(RainbowConfig),
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::Ppo(PpoConfig::default())
    }
}

impl AgentConfig {
    pub fn default_for(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Ppo => AgentConfig::Ppo(PpoConfig::default()),
            AgentKind::Trpo => AgentConfig::Trpo(TrpoConfig::default()),
            AgentKind::Sac => AgentConfig::Sac(SacConfig::default()),
            AgentKind::Rainbow => AgentConfig::Rainbow(RainbowConfig::default()),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            AgentConfig::Ppo(_) => AgentKind::Ppo,
            AgentConfig::Trpo(_) => AgentKind::Trpo,
            AgentConfig::Sac(_) => AgentKind::Sac,
            AgentConfig::Rainbow(_) => AgentKind::Rainbow,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::Ppo(c) => c.validate(),
            AgentConfig::Trpo(c) => c.validate(),
            AgentConfig::Sac(c) => c.validate(),
            AgentConfig::Rainbow(c) => c.validate(),
        }
    }
}

/// Information an agent may need about the whole training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainPlan {
    pub total_steps: usize,
}

/// Trainable parameter counts of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    /// Parameters updated by an optimizer.
    pub optimized: usize,
    /// Reference accounting (differs from `optimized` only for SAC, which
    /// also counts one target network).
    pub reported: usize,
}

pub trait Agent: Send + Sync {
    fn kind(&self) -> AgentKind;

    fn begin_episode(&mut self) -> Result<()> {
        Ok(())
    }

    /// Exploratory action; consumes the agent's own rng stream.
    fn act(&mut self, obs: &Observation) -> Result<Action>;

    /// Deterministic greedy action of the current policy.
    fn act_greedy(&self, obs: &Observation) -> Result<Action>;

    /// Records the outcome of the last `act`.
    fn observe(&mut self, transition: &Transition) -> Result<()>;

    /// Closes the episode; on-policy agents update here.
    fn end_episode(&mut self) -> Result<Diagnostics>;

    fn param_counts(&self) -> ParamCounts;

    fn config(&self) -> AgentConfig;

    /// Serialises the complete training state (networks, optimizers, rng,
    /// buffers and counters).
    fn encode(&self, enc: &mut Encoder);
}

pub fn build_agent(cfg: &AgentConfig, seed: u64, plan: TrainPlan) -> Result<Box<dyn Agent>> {
    cfg.validate()?;
    Ok(match cfg {
        AgentConfig::Ppo(c) => Box::new(PpoAgent::new(c.clone(), seed)?),
        AgentConfig::Trpo(c) => Box::new(TrpoAgent::new(c.clone(), seed)?),
        AgentConfig::Sac(c) => Box::new(SacAgent::new(c.clone(), seed)?),
        AgentConfig::Rainbow(c) => Box::new(RainbowAgent::new(c.clone(), seed, plan)?),
    })
}

pub fn decode_agent(kind: AgentKind, dec: &mut Decoder) -> Result<Box<dyn Agent>> {
    Ok(match kind {
        AgentKind::Ppo => Box::new(PpoAgent::decode(dec)?),
        AgentKind::Trpo => Box::new(TrpoAgent::decode(dec)?),
        AgentKind::Sac => Box::new(SacAgent::decode(dec)?),
        AgentKind::Rainbow => Box::new(RainbowAgent::decode(dec)?),
    })
}

/// An agent that always plays the same action; used as a scripted baseline.
#[derive(Debug, Clone)]
pub struct FixedAgent {
    pub action: Action,
}

impl Agent for FixedAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Ppo
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(self.action)
    }

    fn act_greedy(&self, _obs: &Observation) -> Result<Action> {
        Ok(self.action)
    }

    fn observe(&mut self, _transition: &Transition) -> Result<()> {
        Ok(())
    }

    fn end_episode(&mut self) -> Result<Diagnostics> {
        Ok(Diagnostics::new())
    }

    fn param_counts(&self) -> ParamCounts {
        ParamCounts { optimized: 0, reported: 0 }
    }

    fn config(&self) -> AgentConfig {
        AgentConfig::default_for(AgentKind::Ppo)
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.action.index() as u8);
    }
}

/// `[OBS_DIM, hidden.., outputs]` with relu hidden layers and a linear head.
pub(crate) fn mlp(hidden: &[usize], outputs: usize, seed: u64) -> Result<DenseNet> {
    let mut sizes = vec![OBS_DIM];
    sizes.extend_from_slice(hidden);
    sizes.push(outputs);
    DenseNet::new(&sizes, Activation::Relu, Activation::Identity, seed)
}

pub(crate) fn encode_config(cfg: &AgentConfig, enc: &mut Encoder) {
    enc.str(&serde_json::to_string(cfg).expect("agent configs serialise"));
}

pub(crate) fn decode_config(dec: &mut Decoder) -> Result<AgentConfig> {
    Ok(serde_json::from_str(&dec.string()?)?)
}

pub(crate) fn encode_rng(rng: &ChaCha8Rng, enc: &mut Encoder) {
    enc.bytes(&rng.get_seed());
    enc.u64(rng.get_stream());
    enc.u128(rng.get_word_pos());
}

pub(crate) fn decode_rng(dec: &mut Decoder) -> Result<ChaCha8Rng> {
    use rand::SeedableRng;
    let seed: [u8; 32] = dec.take(32)?.try_into().expect("32 bytes");
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(dec.u64()?);
    rng.set_word_pos(dec.u128()?);
    Ok(rng)
}

pub(crate) fn obs_batch(obs: &[[f64; OBS_DIM]]) -> crate::nn::Matrix {
    let data = obs.iter().flatten().copied().collect();
    crate::nn::Matrix::from_vec(obs.len(), OBS_DIM, data).expect("rows of OBS_DIM")
}

pub(crate) fn check_finite(context: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Training(format!("non-finite {context}: {v}")))
    }
}
