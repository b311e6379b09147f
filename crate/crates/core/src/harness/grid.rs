//! Hyperparameter grid search over seeds on a bounded worker pool.

use serde::{Deserialize, Serialize};

use super::curves::final_window_mean;
use super::train::{train_run, RunOutcome, RunSpec};
use crate::agents::{AgentConfig, AgentKind, PpoConfig, RainbowConfig, SacConfig, TrpoConfig};
use crate::checkpoint::Checkpoint;
use crate::env::SimConfig;
use crate::error::{Error, Result};
use crate::track::Scenario;

/// Episodes averaged at the end of a run to score it.
pub const RANKING_WINDOW: usize = 20;

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "VHO_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: usize,
    /// `name=value` pairs joined by `;`.
    pub label: String,
    pub config: AgentConfig,
}

fn cartesian<A: Copy, B: Copy, C: Copy>(a: &[A], b: &[B], c: &[C]) -> Vec<(A, B, C)> {
    let mut out = Vec::new();
    for &x in a {
        for &y in b {
            for &z in c {
                out.push((x, y, z));
            }
        }
    }
    out
}

/// The searched space for one agent, built around `base`, which supplies
/// every non-searched hyperparameter.
pub fn grid_cells(base: &AgentConfig) -> Vec<GridCell> {
    let cells: Vec<(String, AgentConfig)> = match base {
        AgentConfig::Ppo(b) => cartesian(&[1e-5, 1e-2], &[1e-3, 1e-2], &[0.2, 0.3])
            .into_iter()
            .map(|(la, lc, clip)| {
                let c = PpoConfig { lr_actor: la, lr_critic: lc, clip, ..b.clone() };
                (format!("lr_actor={la};lr_critic={lc};clip={clip}"), AgentConfig::Ppo(c))
            })
            .collect(),
        AgentConfig::Trpo(b) => cartesian(&[0.005, 0.01], &[32usize, 64], &[10usize, 20])
            .into_iter()
            .map(|(kl, w, ls)| {
                let c = TrpoConfig { max_kl: kl, hidden_width: w, line_search_iters: ls, ..b.clone() };
                (format!("max_kl={kl};hidden_width={w};line_search_iters={ls}"), AgentConfig::Trpo(c))
            })
            .collect(),
        AgentConfig::Sac(b) => cartesian(&[0.005, 1e-2], &[3e-4, 5e-4], &[64usize, 128, 256])
            .into_iter()
            .map(|(tau, lr, batch)| {
                let c = SacConfig { tau, lr, batch, ..b.clone() };
                (format!("tau={tau};lr={lr};batch={batch}"), AgentConfig::Sac(c))
            })
            .collect(),
        AgentConfig::Rainbow(b) => {
            let mut out = Vec::new();
            for (alpha, beta, atoms) in cartesian(&[0.1, 0.3], &[0.5, 0.7], &[25usize, 100]) {
                for eps in [1e-5, 1e-4] {
                    let c = RainbowConfig { alpha_per: alpha, beta_per: beta, atoms, prior_eps: eps, ..b.clone() };
                    out.push((
                        format!("alpha_per={alpha};beta_per={beta};atoms={atoms};prior_eps={eps}"),
                        AgentConfig::Rainbow(c),
                    ));
                }
            }
            out
        }
    };
    cells.into_iter().enumerate().map(|(index, (label, config))| GridCell { index, label, config }).collect()
}

/// Score and status of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// 1-based position in the ranking; failed cells come last.
    pub rank: usize,
    pub cell: usize,
    pub label: String,
    /// Mean over seeds of the final-window mean return; `None` if every seed failed.
    pub score: Option<f64>,
    pub seed_scores: Vec<Option<f64>>,
    pub failures: Vec<String>,
}

pub struct GridReport {
    pub agent: AgentKind,
    pub rows: Vec<GridRow>,
    /// Final checkpoints of the first successful seed of the top two cells.
    pub best: Vec<(GridRow, Checkpoint)>,
    pub outcomes: Vec<Vec<RunOutcome>>,
}

/// Stable descending order by score; unscored cells keep their relative
/// order after every scored one.
pub fn rank_scores(scores: &[Option<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match (scores[a], scores[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    order
}

/// Pool size from [`WORKERS_ENV`], else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs independent specs on a pool of `workers` threads, preserving order.
pub fn run_parallel<T: Send, F>(jobs: Vec<RunSpec>, workers: usize, f: F) -> Result<Vec<T>>
where
    F: Fn(RunSpec) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(&f).collect())
}

pub fn grid_search(
    base: &AgentConfig,
    sim: &SimConfig,
    scenario: Scenario,
    seeds: &[u64],
    episodes: usize,
    workers: usize,
) -> Result<GridReport> {
    if seeds.is_empty() || episodes == 0 {
        return Err(Error::config("grid search needs at least one seed and one episode"));
    }
    let cells = grid_cells(base);
    let jobs: Vec<RunSpec> = cells
        .iter()
        .flat_map(|c| {
            seeds.iter().map(|&seed| RunSpec { agent: c.config.clone(), sim: sim.clone(), scenario, seed, episodes })
        })
        .collect();
    let mut flat = run_parallel(jobs, workers, train_run)?.into_iter();
    let outcomes: Vec<Vec<RunOutcome>> = cells.iter().map(|_| flat.by_ref().take(seeds.len()).collect()).collect();

    let mut rows: Vec<GridRow> = cells
        .iter()
        .zip(&outcomes)
        .map(|(cell, runs)| {
            let seed_scores: Vec<Option<f64>> = runs
                .iter()
                .map(|r| r.failure.is_none().then(|| final_window_mean(&r.returns(), RANKING_WINDOW)))
                .collect();
            let ok: Vec<f64> = seed_scores.iter().flatten().copied().collect();
            GridRow {
                rank: 0,
                cell: cell.index,
                label: cell.label.clone(),
                score: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
                seed_scores,
                failures: runs.iter().filter_map(|r| r.failure.clone()).collect(),
            }
        })
        .collect();
    let order = rank_scores(&rows.iter().map(|r| r.score).collect::<Vec<_>>());
    for (pos, &i) in order.iter().enumerate() {
        rows[i].rank = pos + 1;
    }
    let best = order
        .iter()
        .filter(|&&i| rows[i].score.is_some())
        .take(2)
        .filter_map(|&i| {
            outcomes[i].iter().find_map(|r| r.final_checkpoint.clone()).map(|c| (rows[i].clone(), c))
        })
        .collect();
    let ranked = order.iter().map(|&i| rows[i].clone()).collect();
    Ok(GridReport { agent: base.kind(), rows: ranked, best, outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let sizes: Vec<usize> = AgentKind::ALL.iter().map(|&k| grid_cells(&AgentConfig::default_for(k)).len()).collect();
        assert_eq!(sizes, vec![8, 8, 12, 16]);
    }

    #[test]
    fn every_cell_is_valid_and_distinct() {
        for k in AgentKind::ALL {
            let cells = grid_cells(&AgentConfig::default_for(k));
            for (i, c) in cells.iter().enumerate() {
                c.config.validate().unwrap();
                assert!(cells[..i].iter().all(|d| d.config != c.config && d.label != c.label));
            }
        }
    }

    #[test]
    fn defaults_are_grid_members() {
        for k in AgentKind::ALL {
            let base = AgentConfig::default_for(k);
            assert!(grid_cells(&base).iter().any(|c| c.config == base), "{k}");
        }
    }

    #[test]
    fn ranking_is_descending_with_failures_last() {
        let scores = [Some(1.0), None, Some(3.0), Some(-2.0), Some(3.0)];
        assert_eq!(rank_scores(&scores), vec![2, 4, 0, 3, 1]);
    }
}
