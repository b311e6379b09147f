//! TOML run configuration. Every key has a default; unknown keys are errors.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::channel::ChannelConfig;
use crate::env::{CostTable, EnvConfig, SimConfig};
use crate::error::{Error, Result};
use crate::harness::MapSpec;
use crate::track::{GeometryConfig, MobilityConfig, Scenario};

/// File name of the resolved configuration echoed into every run directory.
pub const RESOLVED_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training scenario, 1 or 2.
    pub scenario: u8,
    /// One training run per seed; curves aggregate over exactly this set.
    pub seeds: Vec<u64>,
    /// Training episodes per run.
    pub episodes: usize,
    /// Greedy evaluation episodes per trained policy.
    pub eval_episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub environment: EnvConfig,
    pub track: GeometryConfig,
    pub mobility: MobilityConfig,
    pub channels: ChannelConfig,
    pub costs: CostTable,
    pub decision_map: MapSpec,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            scenario: 1,
            seeds: vec![0, 1, 2, 3, 4],
            episodes: 300,
            eval_episodes: 1,
            output_dir: None,
            environment: sim.environment,
            track: sim.track,
            mobility: sim.mobility,
            channels: sim.channels,
            costs: sim.costs,
            decision_map: MapSpec::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn sim(&self) -> SimConfig {
        SimConfig {
            environment: self.environment.clone(),
            track: self.track.clone(),
            mobility: self.mobility.clone(),
            channels: self.channels.clone(),
            costs: self.costs.clone(),
        }
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_id(self.scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        if self.seeds.is_empty() {
            return Err(Error::config("`seeds` must list at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("`seeds` contains duplicates"));
        }
        if self.episodes == 0 {
            return Err(Error::config("`episodes` must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("`eval_episodes` must be positive"));
        }
        self.sim().validate()?;
        self.decision_map.validate()?;
        self.agent.validate()
    }

    /// Parses and validates TOML text. Errors carry the line and key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialise to TOML")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        fs::write(&path, self.to_toml())?;
        Ok(path)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
