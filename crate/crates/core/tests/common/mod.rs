//! Helpers shared by integration tests.
#![allow(dead_code)]

use serde::Deserialize;
use vho_core::harness::{Metrics, StepOutcome};
use vho_core::Action;

#[derive(Deserialize)]
struct RawCase {
    name: String,
    actions: Vec<usize>,
    success: Vec<bool>,
    rewards: Vec<f64>,
    expected: Metrics,
}

#[derive(Deserialize)]
struct RawFile {
    cases: Vec<RawCase>,
}

pub struct FixtureCase {
    pub name: String,
    pub steps: Vec<StepOutcome>,
    pub expected: Metrics,
}

/// Hand-computed metric fixtures committed under `tests/fixtures`.
pub fn metric_fixtures() -> Vec<FixtureCase> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/metrics_traces.json");
    let raw: RawFile = serde_json::from_str(&std::fs::read_to_string(path).expect("fixture file")).expect("fixture json");
    raw.cases
        .into_iter()
        .map(|c| {
            assert!(c.actions.len() == c.success.len() && c.actions.len() == c.rewards.len(), "{}", c.name);
            let steps = c
                .actions
                .iter()
                .zip(&c.success)
                .zip(&c.rewards)
                .map(|((&a, &success), &reward)| StepOutcome {
                    action: Action::from_index(a - 1).expect("action id 1..=8"),
                    success,
                    reward,
                })
                .collect();
            FixtureCase { name: c.name, steps, expected: c.expected }
        })
        .collect()
}
