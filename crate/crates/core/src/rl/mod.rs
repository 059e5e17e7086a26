//! Recurrent actor-critic trained with clipped-ratio policy optimisation.

pub mod gradcheck;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod train;

use thiserror::Error;

use crate::env::EnvError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid ppo config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("update called on an empty buffer")]
    EmptyBuffer,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub use nn::{CellState, LinearShape, LstmShape};
pub use policy::{ActorCritic, PolicyShape};
pub use ppo::{PpoConfig, RolloutBuffer, Transition, UpdateStats};
pub use train::{evaluate_episode, train, Checkpoint, EpisodeLog, TrainOutcome};
