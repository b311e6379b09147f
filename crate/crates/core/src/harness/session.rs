//! Command-level operations that read a [`RunConfig`] and fill a run
//! directory. Nothing is written outside the given output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::curves::{aggregate_curves, episodes_to_fraction, final_window_mean};
use super::eval::{decision_map, evaluate_greedy, robustness_eval, Evaluation, MapSpec, RobustnessEntry, RobustnessRow};
use super::grid::{grid_search, run_parallel, worker_count, GridRow, RANKING_WINDOW};
use super::output::*;
use super::train::{RunOutcome, RunSpec, Trainer};
use crate::agents::{AgentConfig, AgentKind, ParamCounts};
use crate::channel::{link_success, ChannelConfig, LinkKind};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::env::write_trace_csv;
use crate::error::{Error, Result};

pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const GRID_JSON: &str = "grid.json";
pub const CHANNEL_PROBE_CSV_HEADER: &str = "distance_m,bearing_rad,dsrc,headlight,taillight";

/// Smoothing window and fraction used for the sample-complexity measure.
pub const CONVERGENCE_WINDOW: usize = 10;
pub const CONVERGENCE_FRACTION: f64 = 0.9;

pub fn final_checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("seed_{seed}_final.ckpt"))
}

pub fn best_checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("seed_{seed}_best.ckpt"))
}

pub fn grid_checkpoint_path(dir: &Path, rank: usize) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("grid_best_{rank}.ckpt"))
}

fn prepare(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out.join(CHECKPOINT_DIR))?;
    cfg.echo(out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub failure: Option<String>,
    pub episodes_completed: usize,
    pub final_window_return: Option<f64>,
    /// First episode (1-based) whose smoothed return reaches 90% of the final one.
    pub episodes_to_90pct: Option<usize>,
    pub greedy: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub schema_version: u32,
    pub agent: AgentKind,
    pub scenario: u8,
    pub episodes: usize,
    pub param_counts: ParamCounts,
    pub runs: Vec<SeedSummary>,
    /// Means over successful seeds of the greedy metrics.
    pub mean_reliability: Option<f64>,
    pub mean_headlight_rate: Option<f64>,
    pub mean_taillight_rate: Option<f64>,
    pub mean_no_redundancy: Option<f64>,
    pub mean_vlc_utilization: Option<f64>,
    pub mean_switch_count: Option<f64>,
    pub mean_episodes_to_90pct: Option<f64>,
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn run_specs(cfg: &RunConfig) -> Result<Vec<RunSpec>> {
    let scenario = cfg.scenario()?;
    Ok(cfg
        .seeds
        .iter()
        .map(|&seed| RunSpec { agent: cfg.agent.clone(), sim: cfg.sim(), scenario, seed, episodes: cfg.episodes })
        .collect())
}

/// A trained seed and its greedy evaluation.
pub struct TrainedSeed {
    pub outcome: RunOutcome,
    pub greedy: Option<(Evaluation, Vec<crate::env::Transition>)>,
}

fn finish_seed(mut trainer: Trainer, cfg: &RunConfig, stop_after: Option<usize>) -> Result<TrainedSeed> {
    let failure = match trainer.run_until(stop_after.unwrap_or(cfg.episodes)) {
        Ok(()) => None,
        Err(Error::Training(msg)) => Some(msg),
        Err(e) => return Err(e),
    };
    let greedy = if failure.is_none() {
        Some(evaluate_greedy(trainer.agent(), &cfg.sim(), cfg.scenario()?, trainer.spec().seed, cfg.eval_episodes)?)
    } else {
        None
    };
    let outcome = RunOutcome {
        final_checkpoint: failure.is_none().then(|| trainer.checkpoint()),
        best_checkpoint: trainer.best_checkpoint().cloned(),
        history: trainer.history().to_vec(),
        spec: trainer.spec().clone(),
        failure,
    };
    Ok(TrainedSeed { outcome, greedy })
}

/// Trains every configured seed (in parallel) and evaluates each greedily.
/// `stop_after` halts at that episode count without changing the run's
/// budget, so a later resume continues the same schedule.
pub fn train_seeds(cfg: &RunConfig, stop_after: Option<usize>) -> Result<Vec<TrainedSeed>> {
    cfg.validate()?;
    run_parallel(run_specs(cfg)?, worker_count(), |spec| finish_seed(Trainer::new(spec)?, cfg, stop_after))
}

/// `train`: fills `out` with the echoed config, curves, metrics, the first
/// seed's greedy trace and decision map, and per-seed checkpoints.
/// With `resume`, the single configured seed continues from that checkpoint
/// file; a `seed_<s>_best.ckpt` beside it restores the best-so-far model.
pub fn run_train(cfg: &RunConfig, out: &Path, resume: Option<&Path>, stop_after: Option<usize>) -> Result<TrainSummary> {
    prepare(cfg, out)?;
    let seeds = match resume {
        None => train_seeds(cfg, stop_after)?,
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let specs = run_specs(cfg)?;
            if specs.len() != 1 {
                return Err(Error::config("resuming requires exactly one seed"));
            }
            let spec = specs.into_iter().next().expect("one spec");
            let best = path.parent().map(|d| d.join(format!("seed_{}_best.ckpt", spec.seed)));
            let mut trainer = Trainer::resume(spec, &ckpt)?;
            if let Some(b) = best.filter(|b| b.exists()) {
                trainer = trainer.with_best(Checkpoint::load(&b)?);
            }
            vec![finish_seed(trainer, cfg, stop_after)?]
        }
    };
    write_train_outputs(cfg, out, &seeds)
}

fn write_train_outputs(cfg: &RunConfig, out: &Path, seeds: &[TrainedSeed]) -> Result<TrainSummary> {
    let mut runs = Vec::new();
    for s in seeds {
        let o = &s.outcome;
        let seed = o.spec.seed;
        if let Some(c) = &o.final_checkpoint {
            c.save(&final_checkpoint_path(out, seed))?;
        }
        if let Some(c) = &o.best_checkpoint {
            c.save(&best_checkpoint_path(out, seed))?;
        }
        let returns = o.returns();
        runs.push(SeedSummary {
            seed,
            failure: o.failure.clone(),
            episodes_completed: returns.len(),
            final_window_return: (!returns.is_empty()).then(|| final_window_mean(&returns, RANKING_WINDOW)),
            episodes_to_90pct: episodes_to_fraction(&returns, CONVERGENCE_FRACTION, CONVERGENCE_WINDOW),
            greedy: s.greedy.as_ref().map(|g| g.0.clone()),
        });
    }

    let ok: Vec<&TrainedSeed> = seeds.iter().filter(|s| s.outcome.failure.is_none()).collect();
    let curves: Vec<Vec<f64>> = ok.iter().map(|s| s.outcome.returns()).collect();
    let curve = if curves.len() >= 2 { Some(aggregate_curves(&curves)?) } else { None };
    write_file(&out.join("curve.csv"), |w| write_curve_csv(&curves, curve.as_ref(), w))?;
    let per_seed: Vec<(u64, Vec<_>)> = seeds.iter().map(|s| (s.outcome.spec.seed, s.outcome.history.clone())).collect();
    write_file(&out.join("episodes.csv"), |w| write_episodes_csv(&per_seed, w))?;

    if let Some(first) = ok.first() {
        if let Some((_, trace)) = &first.greedy {
            write_file(&out.join("trace.csv"), |w| write_trace_csv(trace, w))?;
        }
        if let Some(ckpt) = &first.outcome.final_checkpoint {
            let agent = ckpt.restore_agent()?;
            let map = decision_map(agent.as_ref(), cfg.decision_map, &cfg.sim(), cfg.scenario()?, first.outcome.spec.seed)?;
            write_file(&out.join("decision_map.csv"), |w| write_decision_map_csv(&map, w))?;
            write_json(&out.join("decision_overlap.json"), &map.overlap)?;
        }
    }

    let greedy: Vec<&Evaluation> = runs.iter().filter_map(|r| r.greedy.as_ref()).collect();
    let param_counts = crate::agents::build_agent(&cfg.agent, 0, crate::agents::TrainPlan { total_steps: 1 })?.param_counts();
    let summary = TrainSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        agent: cfg.agent.kind(),
        scenario: cfg.scenario,
        episodes: cfg.episodes,
        param_counts,
        mean_reliability: mean_of(greedy.iter().map(|g| g.mean.reliability)),
        mean_headlight_rate: mean_of(greedy.iter().map(|g| g.mean.headlight_rate)),
        mean_taillight_rate: mean_of(greedy.iter().map(|g| g.mean.taillight_rate)),
        mean_no_redundancy: mean_of(greedy.iter().map(|g| g.mean.no_redundancy)),
        mean_vlc_utilization: mean_of(greedy.iter().map(|g| g.mean.vlc_utilization)),
        mean_switch_count: mean_of(greedy.iter().flat_map(|g| g.episodes.iter().map(|m| m.switch_count as f64))),
        mean_episodes_to_90pct: mean_of(runs.iter().filter_map(|r| r.episodes_to_90pct.map(|e| e as f64))),
        runs,
    };
    write_json(&out.join("metrics.json"), &summary)?;
    Ok(summary)
}

/// `evaluate`: greedy metrics and trace of a checkpoint on the configured scenario.
pub fn run_evaluate(cfg: &RunConfig, ckpt: &Checkpoint, out: &Path) -> Result<Evaluation> {
    prepare(cfg, out)?;
    let agent = ckpt.restore_agent()?;
    let (eval, trace) = evaluate_greedy(agent.as_ref(), &cfg.sim(), cfg.scenario()?, cfg.seeds[0], cfg.eval_episodes)?;
    write_file(&out.join("trace.csv"), |w| write_trace_csv(&trace, w))?;
    write_json(&out.join("metrics.json"), &eval)?;
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub schema_version: u32,
    pub agent: AgentKind,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<GridRow>,
}

/// `grid-search`: ranks every grid cell of the configured agent and saves the
/// top two cells' checkpoints.
pub fn run_grid(cfg: &RunConfig, out: &Path) -> Result<GridSummary> {
    prepare(cfg, out)?;
    let report = grid_search(&cfg.agent, &cfg.sim(), cfg.scenario()?, &cfg.seeds, cfg.episodes, worker_count())?;
    for (row, ckpt) in &report.best {
        let rank = report.rows.iter().position(|r| r.cell == row.cell).map_or(0, |p| p + 1);
        ckpt.save(&grid_checkpoint_path(out, rank))?;
    }
    write_file(&out.join("grid_ranking.csv"), |w| write_grid_csv(&report.rows, w))?;
    let summary = GridSummary {
        schema_version: OUTPUT_SCHEMA_VERSION,
        agent: report.agent,
        episodes: cfg.episodes,
        seeds: cfg.seeds.clone(),
        rows: report.rows,
    };
    write_json(&out.join(GRID_JSON), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub schema_version: u32,
    pub eval_episodes: usize,
    pub rows: Vec<RobustnessRow>,
}

/// Loads the two best checkpoints of a grid directory; absent files stay `None`.
pub fn grid_entries(grid_dir: &Path) -> Result<Vec<RobustnessEntry>> {
    let text = fs::read_to_string(grid_dir.join(GRID_JSON))?;
    let summary: GridSummary = serde_json::from_str(&text)?;
    Ok((1..=2)
        .map(|rank| {
            let path = grid_checkpoint_path(grid_dir, rank);
            RobustnessEntry {
                agent: summary.agent,
                rank,
                label: summary.rows.get(rank - 1).map_or_else(String::new, |r| r.label.clone()),
                checkpoint: Checkpoint::load(&path).ok(),
            }
        })
        .collect())
}

/// `robustness`: scenario-1 vs scenario-2 reliability of each grid's top two models.
pub fn run_robustness(cfg: &RunConfig, grid_dirs: &[PathBuf], out: &Path) -> Result<RobustnessReport> {
    prepare(cfg, out)?;
    let mut entries = Vec::new();
    for d in grid_dirs {
        entries.extend(grid_entries(d)?);
    }
    let report = RobustnessReport {
        schema_version: OUTPUT_SCHEMA_VERSION,
        eval_episodes: cfg.eval_episodes,
        rows: robustness_eval(&entries, &cfg.sim(), cfg.seeds[0], cfg.eval_episodes)?,
    };
    write_json(&out.join("robustness.json"), &report)?;
    Ok(report)
}

/// `decision-map`: greedy action grid and on-trajectory overlap of a checkpoint.
pub fn run_decision_map(cfg: &RunConfig, ckpt: &Checkpoint, out: &Path) -> Result<()> {
    prepare(cfg, out)?;
    let agent = ckpt.restore_agent()?;
    let map = decision_map(agent.as_ref(), cfg.decision_map, &cfg.sim(), cfg.scenario()?, cfg.seeds[0])?;
    write_file(&out.join("decision_map.csv"), |w| write_decision_map_csv(&map, w))?;
    write_json(&out.join("decision_overlap.json"), &map.overlap)
}

/// Per-link delivery probability on the decision-map grid, vehicles aligned.
pub fn channel_probe_rows(channels: &ChannelConfig, spec: &MapSpec) -> Vec<[f64; 5]> {
    let mut rows = Vec::with_capacity(spec.distance_bins * spec.bearing_bins);
    for i in 0..spec.distance_bins {
        for j in 0..spec.bearing_bins {
            let (d, b) = (spec.distance(i), spec.bearing(j));
            let geom = crate::track::RelGeometry {
                distance: d,
                bearing_tx: b,
                bearing_rx: crate::track::wrap_angle(b + std::f64::consts::PI),
            };
            rows.push([
                d,
                b,
                link_success(LinkKind::Dsrc, &geom, channels),
                link_success(LinkKind::VlcHeadlight, &geom, channels),
                link_success(LinkKind::VlcTaillight, &geom, channels),
            ]);
        }
    }
    rows
}

/// `channel-probe`: writes `channel_probe.csv`.
pub fn run_channel_probe(cfg: &RunConfig, out: &Path) -> Result<()> {
    use std::io::Write;
    prepare(cfg, out)?;
    let rows = channel_probe_rows(&cfg.channels, &cfg.decision_map);
    write_file(&out.join("channel_probe.csv"), |w| {
        writeln!(w, "{CHANNEL_PROBE_CSV_HEADER}")?;
        for r in &rows {
            writeln!(w, "{},{},{},{},{}", r[0], r[1], r[2], r[3], r[4])?;
        }
        Ok(())
    })
}

/// Replaces the agent section with defaults for `kind` unless the
/// configuration already describes that kind.
pub fn with_agent_kind(mut cfg: RunConfig, kind: AgentKind) -> RunConfig {
    if cfg.agent.kind() != kind {
        cfg.agent = AgentConfig::default_for(kind);
    }
    cfg
}
