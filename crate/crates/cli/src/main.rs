//! `vho`: train, evaluate and analyse link-selection agents.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use vho_core::agents::AgentKind;
use vho_core::checkpoint::Checkpoint;
use vho_core::config::{load_config, RunConfig};
use vho_core::harness::session;

#[derive(Parser, Debug)]
#[command(name = "vho", version, about = "Hybrid DSRC/VLC vertical-handover benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Replace the configured seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override the episode budget.
    #[arg(long)]
    episodes: Option<usize>,
    /// Override the scenario (1 or 2).
    #[arg(long)]
    scenario: Option<u8>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one agent on every configured seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train this agent with default hyperparameters instead of the configured one.
        #[arg(long)]
        agent: Option<AgentKind>,
        /// Continue from an episode-boundary checkpoint (single seed only).
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        /// Stop after this many episodes while keeping the full budget's schedule.
        #[arg(long, value_name = "N")]
        stop_after: Option<usize>,
    },
    /// Greedy evaluation of a checkpoint.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Greedy episodes to play.
        #[arg(long)]
        eval_episodes: Option<usize>,
    },
    /// Train and rank every hyperparameter cell of one agent's grid.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        agent: Option<AgentKind>,
    },
    /// Compare the two best grid models on both scenarios.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// Output directory of a previous grid search; repeatable.
        #[arg(long = "grid", value_name = "DIR", required = true)]
        grids: Vec<PathBuf>,
        #[arg(long)]
        eval_episodes: Option<usize>,
    },
    /// Greedy action over a (distance, bearing) grid plus on-trajectory overlap.
    DecisionMap {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
    },
    /// Per-link delivery probabilities over a (distance, bearing) grid.
    ChannelProbe {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(e) = common.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = common.scenario {
        cfg.scenario = s;
    }
    let out = match (&common.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => bail!("no output directory: pass --out or set `output_dir`"),
    };
    cfg.validate()?;
    Ok((cfg, out))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, agent, resume, stop_after } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(kind) = agent {
                cfg = session::with_agent_kind(cfg, kind);
            }
            let s = session::run_train(&cfg, &out, resume.as_deref(), stop_after)?;
            for r in &s.runs {
                match (&r.failure, &r.greedy) {
                    (Some(f), _) => println!("seed {}: FAILED {f}", r.seed),
                    (None, Some(g)) => println!(
                        "seed {}: reliability {:.2}% headlight {:.2}% switches {}",
                        r.seed, g.mean.reliability, g.mean.headlight_rate, g.mean.switch_count
                    ),
                    (None, None) => println!("seed {}: no evaluation", r.seed),
                }
            }
            if s.runs.iter().all(|r| r.failure.is_some()) {
                bail!("every seed failed");
            }
        }
        Command::Evaluate { common, checkpoint, eval_episodes } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(n) = eval_episodes {
                cfg.eval_episodes = n;
            }
            let e = session::run_evaluate(&cfg, &load_checkpoint(&checkpoint)?, &out)?;
            println!("reliability {:.2}% return {:.1}", e.mean.reliability, e.mean.mean_return);
        }
        Command::GridSearch { common, agent } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(kind) = agent {
                cfg = session::with_agent_kind(cfg, kind);
            }
            let g = session::run_grid(&cfg, &out)?;
            for r in g.rows.iter().take(2) {
                println!("#{} {} score {}", r.rank, r.label, r.score.map_or("failed".into(), |s| format!("{s:.1}")));
            }
        }
        Command::Robustness { common, grids, eval_episodes } => {
            let (mut cfg, out) = resolve(&common)?;
            if let Some(n) = eval_episodes {
                cfg.eval_episodes = n;
            }
            let r = session::run_robustness(&cfg, &grids, &out)?;
            for row in &r.rows {
                println!("{} #{}: {}", row.agent, row.rank, row.status);
            }
        }
        Command::DecisionMap { common, checkpoint } => {
            let (cfg, out) = resolve(&common)?;
            session::run_decision_map(&cfg, &load_checkpoint(&checkpoint)?, &out)?;
        }
        Command::ChannelProbe { common } => {
            let (cfg, out) = resolve(&common)?;
            session::run_channel_probe(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
