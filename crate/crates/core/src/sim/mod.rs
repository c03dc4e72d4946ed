//! Synthetic needle-search environment, toy parametric policy, and the
//! end-to-end training loop that reproduces the qualitative training
//! dynamics: visual-thinking collapse under outcome-only reward,
//! over-invocation under naive step rewards, and sparse-precise grounding
//! under the full fidelity/credit stack.
//!
//! Episodes are rendered through the real trace grammar, so the parser, the
//! format reward, and the scorer all run inside the training loop.

mod env;
mod experiment;
mod policy;

pub use env::{generate_task, EnvAction, EnvConfig, EnvObservation, NeedleEnv, NeedleTask};
pub use experiment::{
    policy_update, rollout_group, run_experiment, run_experiment_with_observer, ExperimentConfig,
    IterationDebug, IterationRow, RewardMode, TrainingLog, UpdateStats,
};
pub use policy::{build_anchors, Decision, DecisionKind, Episode, PolicyInit, PolicyParams};

use crate::credit::CreditError;
use crate::geom::GeomError;
use crate::reward::RewardError;
use crate::trace::TraceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible environment config: {0}")]
    InfeasibleConfig(String),
    #[error("action taken after the episode terminated")]
    EpisodeTerminated,
    #[error("zoom exceeds the round limit of {limit}")]
    RoundLimitExceeded { limit: usize },
    #[error("non-finite gradient during policy update: {0}")]
    NanGradient(String),
    #[error("training log: {0}")]
    LogFormat(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Credit(#[from] CreditError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}
