//! Greedy-policy evaluation, scenario transfer and decision maps.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::metrics::{mean_metrics, trace_metrics, Metrics};
use crate::agents::{Agent, AgentKind};
use crate::checkpoint::Checkpoint;
use crate::env::{observe, HandoverEnv, Observation, SimConfig, Transition, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::seed;
use crate::track::{wrap_angle, RelGeometry, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scenario: u8,
    pub episodes: Vec<Metrics>,
    pub mean: Metrics,
}

/// Plays `episodes` greedy episodes on evaluation seeds derived from `seed`.
/// Also returns the trace of the first episode.
pub fn evaluate_greedy(
    agent: &dyn Agent,
    sim: &SimConfig,
    scenario: Scenario,
    seed: u64,
    episodes: usize,
) -> Result<(Evaluation, Vec<Transition>)> {
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let mut env = HandoverEnv::new(sim.clone(), scenario, seed::eval_seed(seed, 0))?;
    let mut all = Vec::with_capacity(episodes);
    let mut first = Vec::new();
    for k in 0..episodes {
        let mut obs = env.reset(scenario, seed::eval_seed(seed, k))?;
        let mut trace = Vec::with_capacity(env.horizon());
        loop {
            let t = env.step(agent.act_greedy(&obs)?)?;
            obs = t.next_obs;
            let done = t.done;
            trace.push(t);
            if done {
                break;
            }
        }
        all.push(trace_metrics(&trace)?);
        if k == 0 {
            first = trace;
        }
    }
    Ok((Evaluation { scenario: scenario.id(), mean: mean_metrics(&all)?, episodes: all }, first))
}

/// One row of the transfer report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub agent: AgentKind,
    /// 1 for the best grid cell, 2 for the runner-up.
    pub rank: usize,
    pub label: String,
    /// `None` when the checkpoint was absent or failed to load.
    pub reliability_scenario1: Option<f64>,
    pub reliability_scenario2: Option<f64>,
    /// Scenario-1 minus scenario-2 reliability.
    pub gap: Option<f64>,
    pub status: String,
}

/// A checkpoint to be tested for transfer, or its absence.
pub struct RobustnessEntry {
    pub agent: AgentKind,
    pub rank: usize,
    pub label: String,
    pub checkpoint: Option<Checkpoint>,
}

pub fn robustness_eval(
    entries: &[RobustnessEntry],
    sim: &SimConfig,
    seed: u64,
    episodes: usize,
) -> Result<Vec<RobustnessRow>> {
    entries
        .iter()
        .map(|e| {
            let mut row = RobustnessRow {
                agent: e.agent,
                rank: e.rank,
                label: e.label.clone(),
                reliability_scenario1: None,
                reliability_scenario2: None,
                gap: None,
                status: "absent".into(),
            };
            let Some(ckpt) = &e.checkpoint else { return Ok(row) };
            let agent = match ckpt.restore_agent() {
                Ok(a) => a,
                Err(err) => {
                    row.status = format!("unloadable: {err}");
                    return Ok(row);
                }
            };
            let r1 = evaluate_greedy(agent.as_ref(), sim, Scenario::One, seed, episodes)?.0.mean.reliability;
            let r2 = evaluate_greedy(agent.as_ref(), sim, Scenario::Two, seed, episodes)?.0.mean.reliability;
            row.reliability_scenario1 = Some(r1);
            row.reliability_scenario2 = Some(r2);
            row.gap = Some(r1 - r2);
            row.status = "ok".into();
            Ok(row)
        })
        .collect()
}

/// Polar sweep of relative positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSpec {
    pub distance_bins: usize,
    pub max_distance_m: f64,
    pub bearing_bins: usize,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self { distance_bins: 40, max_distance_m: 200.0, bearing_bins: 72 }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.distance_bins == 0 || self.bearing_bins == 0 || !(self.max_distance_m > 0.0) {
            return Err(Error::config("decision map needs positive bin counts and max distance"));
        }
        Ok(())
    }

    /// Cell centre distance.
    pub fn distance(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.max_distance_m / self.distance_bins as f64
    }

    /// Cell centre bearing in `(−π, π]`.
    pub fn bearing(&self, j: usize) -> f64 {
        wrap_angle(-PI + (j as f64 + 0.5) * 2.0 * PI / self.bearing_bins as f64)
    }

    /// Cell containing a (distance, bearing) pair, if inside the sweep.
    pub fn cell_of(&self, distance: f64, bearing: f64) -> Option<(usize, usize)> {
        if !(0.0..self.max_distance_m).contains(&distance) {
            return None;
        }
        let i = (distance / self.max_distance_m * self.distance_bins as f64) as usize;
        let u = (wrap_angle(bearing) + PI) / (2.0 * PI);
        let j = ((u * self.bearing_bins as f64) as usize).min(self.bearing_bins - 1);
        Some((i.min(self.distance_bins - 1), j))
    }

    /// Observation of a receiver at `distance` and transmitter-frame
    /// `bearing`, with both vehicles sharing one heading.
    pub fn observation(&self, distance: f64, bearing: f64, range: f64) -> Observation {
        let geom = RelGeometry { distance, bearing_tx: bearing, bearing_rx: wrap_angle(bearing + PI) };
        observe(&geom, range)
    }
}

/// Visits of one cell along a trajectory whose greedy action changed
/// between consecutive visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCell {
    pub distance_bin: usize,
    pub bearing_bin: usize,
    pub visits: usize,
    pub disagreements: usize,
    /// Visit counts by one-based action id.
    pub actions: BTreeMap<u8, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMap {
    pub spec: MapSpec,
    /// `actions[i][j]`: one-based greedy action id at distance bin `i`, bearing bin `j`.
    pub actions: Vec<Vec<u8>>,
    pub overlap: Vec<OverlapCell>,
}

pub fn decision_map(agent: &dyn Agent, spec: MapSpec, sim: &SimConfig, scenario: Scenario, seed: u64) -> Result<DecisionMap> {
    spec.validate()?;
    let range = sim.environment.range_m;
    let mut actions = vec![vec![0u8; spec.bearing_bins]; spec.distance_bins];
    for (i, row) in actions.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = agent.act_greedy(&spec.observation(spec.distance(i), spec.bearing(j), range))?.id();
        }
    }
    let mut env = HandoverEnv::new(sim.clone(), scenario, seed::eval_seed(seed, 0))?;
    let mut cells: BTreeMap<(usize, usize), (Vec<u8>, usize)> = BTreeMap::new();
    let mut obs = env.observation();
    loop {
        let g = env.geometry();
        let action = agent.act_greedy(&obs)?;
        if let Some(c) = spec.cell_of(g.distance, g.bearing_tx) {
            let entry = cells.entry(c).or_default();
            if entry.0.last().is_some_and(|&prev| prev != action.id()) {
                entry.1 += 1;
            }
            entry.0.push(action.id());
        }
        let t = env.step(action)?;
        obs = t.next_obs;
        if t.done {
            break;
        }
    }
    let overlap = cells
        .into_iter()
        .filter(|(_, (_, d))| *d > 0)
        .map(|((i, j), (visits, d))| {
            let mut counts = BTreeMap::new();
            for a in &visits {
                *counts.entry(*a).or_insert(0) += 1;
            }
            OverlapCell { distance_bin: i, bearing_bin: j, visits: visits.len(), disagreements: d, actions: counts }
        })
        .collect();
    debug_assert!(actions.iter().flatten().all(|&a| (1..=NUM_ACTIONS as u8).contains(&a)));
    Ok(DecisionMap { spec, actions, overlap })
}
