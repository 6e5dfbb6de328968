//! Learning side of the bridge task: the attention actor-critic, PPO and
//! phasic (PPG) training with a width curriculum, and evaluation.
//!
//! Training runs in `f32`; every model function is generic over
//! [`bridge_autodiff::Element`] so gradient checks can run the same code in
//! `f64`.

pub mod checkpoint;
pub mod dist;
pub mod eval;
pub mod gae;
pub mod losses;
pub mod network;
pub mod rollout;
pub mod run;
pub mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dist::{evaluate_actions, sample_action, ActionDistributions};
pub use eval::{evaluate_hard, evaluate_widths, EvalReport};
pub use network::{ArchVariant, Heads, NetworkConfig, ObsBatch, PolicyNet, Want};
pub use rollout::{EpisodeStats, RolloutBatch, WorkerPool};
pub use run::{run, RunOutput, RunSummary, StopRule};
pub use trainer::{Algorithm, IterationMetrics, StepsMode, TrainConfig, Trainer};

use bridge_autodiff::AutodiffError;
use bridge_core::curriculum::CurriculumError;
use bridge_core::env::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unsupported checkpoint version {found} (this build reads {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("non-finite {what} at update {update}; minibatch dumped to {dump}")]
    NonFinite { what: String, update: u64, dump: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
