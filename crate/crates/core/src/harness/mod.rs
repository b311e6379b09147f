//! Training orchestration, evaluation metrics and reporting.

pub mod curves;
pub mod eval;
pub mod grid;
pub mod metrics;
pub mod output;
pub mod session;
pub mod train;

pub use curves::{aggregate_curves, episodes_to_fraction, final_window_mean, smooth, LearningCurve};
pub use eval::{decision_map, evaluate_greedy, robustness_eval, DecisionMap, Evaluation, MapSpec, RobustnessEntry, RobustnessRow};
pub use grid::{grid_cells, grid_search, rank_scores, worker_count, GridCell, GridReport, GridRow, RANKING_WINDOW};
pub use metrics::{compute_metrics, mean_metrics, trace_metrics, Metrics, MetricsAccumulator, StepOutcome};
pub use train::{train_run, EpisodeRecord, RunOutcome, RunSpec, Trainer};
