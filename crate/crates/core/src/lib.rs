//! Vertical-handover simulation and reinforcement-learning toolkit for a
//! two-vehicle platoon that can talk over DSRC and two visible-light links.
//!
//! Layout:
//! - [`track`]: closed serpentine tracks and leader/follower mobility.
//! - [`channel`]: per-link delivery probabilities.
//! - [`env`]: the handover decision process.
//! - [`nn`]: dense networks, gradients and Adam.
//! - [`agents`]: PPO, TRPO, discrete SAC and Rainbow.
//! - [`harness`]: training loops, metrics, grid search and evaluation.
//! - [`config`] / [`checkpoint`]: run configuration and resumable state.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod seed;
pub mod track;

pub use channel::{ChannelConfig, LinkKind, LinkProbabilities};
pub use env::{Action, CostTable, EnvConfig, HandoverEnv, Observation, SimConfig, StepInfo, Transition};
pub use error::{Error, Result};
pub use track::{GeometryConfig, MobilityConfig, Scenario, Track};
