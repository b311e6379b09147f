//! Per-episode link-usage and delivery metrics.

use serde::{Deserialize, Serialize};

use crate::channel::LinkKind;
use crate::env::{Action, Transition};
use crate::error::{Error, Result};

/// The part of a transition that metrics depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub action: Action,
    pub success: bool,
    pub reward: f64,
}

impl From<&Transition> for StepOutcome {
    fn from(t: &Transition) -> Self {
        Self { action: t.action, success: t.info.success, reward: t.reward }
    }
}

/// Percentages lie in `[0, 100]`; `switch_count ≤ steps − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub steps: usize,
    /// Delivered beacons over generated beacons; an empty link set is a loss.
    pub reliability: f64,
    /// Steps whose link set contains any VLC link.
    pub vlc_utilization: f64,
    /// Steps whose link set contains the headlight.
    pub headlight_rate: f64,
    /// Steps using at most one link.
    pub no_redundancy: f64,
    /// Steps whose link set contains the taillight.
    pub taillight_rate: f64,
    /// Number of `t` with `a_t ≠ a_{t−1}`.
    pub switch_count: usize,
    /// Sum of rewards over the trace.
    pub mean_return: f64,
}

/// Streaming form of [`compute_metrics`], so training loops need not keep traces.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    steps: usize,
    delivered: usize,
    vlc: usize,
    headlight: usize,
    single: usize,
    taillight: usize,
    switches: usize,
    total_reward: f64,
    last: Option<Action>,
}

impl MetricsAccumulator {
    pub fn push(&mut self, s: StepOutcome) {
        self.steps += 1;
        self.delivered += usize::from(s.success && s.action != Action::NoTransmission);
        self.vlc += usize::from(s.action.uses_vlc());
        self.headlight += usize::from(s.action.uses(LinkKind::VlcHeadlight));
        self.single += usize::from(s.action.link_count() <= 1);
        self.taillight += usize::from(s.action.uses(LinkKind::VlcTaillight));
        self.switches += usize::from(self.last.is_some_and(|a| a != s.action));
        self.total_reward += s.reward;
        self.last = Some(s.action);
    }

    pub fn finish(&self) -> Result<Metrics> {
        if self.steps == 0 {
            return Err(Error::contract("metrics of an empty trace"));
        }
        let pct = |k: usize| 100.0 * k as f64 / self.steps as f64;
        Ok(Metrics {
            steps: self.steps,
            reliability: pct(self.delivered),
            vlc_utilization: pct(self.vlc),
            headlight_rate: pct(self.headlight),
            no_redundancy: pct(self.single),
            taillight_rate: pct(self.taillight),
            switch_count: self.switches,
            mean_return: self.total_reward,
        })
    }
}

pub fn compute_metrics(trace: &[StepOutcome]) -> Result<Metrics> {
    let mut acc = MetricsAccumulator::default();
    trace.iter().for_each(|&s| acc.push(s));
    acc.finish()
}

pub fn trace_metrics(trace: &[Transition]) -> Result<Metrics> {
    let mut acc = MetricsAccumulator::default();
    trace.iter().for_each(|t| acc.push(t.into()));
    acc.finish()
}

/// Field-wise mean of several metric sets (switch counts are rounded down).
pub fn mean_metrics(all: &[Metrics]) -> Result<Metrics> {
    if all.is_empty() {
        return Err(Error::contract("mean of zero metric sets"));
    }
    let n = all.len() as f64;
    let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Ok(Metrics {
        steps: all.iter().map(|m| m.steps).sum::<usize>() / all.len(),
        reliability: avg(|m| m.reliability),
        vlc_utilization: avg(|m| m.vlc_utilization),
        headlight_rate: avg(|m| m.headlight_rate),
        no_redundancy: avg(|m| m.no_redundancy),
        taillight_rate: avg(|m| m.taillight_rate),
        switch_count: all.iter().map(|m| m.switch_count).sum::<usize>() / all.len(),
        mean_return: avg(|m| m.mean_return),
    })
}
