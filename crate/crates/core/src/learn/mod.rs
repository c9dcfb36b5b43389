//! Learning stack: a small reverse-mode autodiff kernel, GCN and MLP
//! actor-critic networks, PPO, checkpoints and the training loop.

mod adam;
mod agent;
mod checkpoint;
mod network;
mod nn;
mod ppo;
mod tape;
mod tensor;
mod train;

use std::path::PathBuf;

use thiserror::Error;

pub use adam::Adam;
pub use agent::{collect_episode, greedy_action, sample_action, ActionSelection, AgentPolicy};
pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMeta, CHECKPOINT_VERSION};
pub use network::{normalized_adjacencies, ActorCritic, Architecture, Heads, Observation, FLAT_INPUT, HIDDEN};
pub use nn::{gcn_forward, leaky_relu_gain, orthogonal, GcnLayer, Linear, Param, ParamStore, LEAKY_SLOPE, TANH_GAIN};
pub use ppo::{compute_gae, ppo_loss, ppo_update, LossTerms, PpoConfig, Transition, UpdateStats};
pub use tape::{Gradients, Mask, Tape, Var};
pub use tensor::{ShapeError, Tensor};
pub use train::{mix_seed, CurvePoint, TrainConfig, Trainer};

use crate::sim::{PolicyError, SimError};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("non-finite loss {loss} in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize, loss: f64 },
    #[error("rollout buffer is empty")]
    EmptyBuffer,
    #[error("invalid learning configuration: {0}")]
    Config(String),
    #[error("episode failed: {0}")]
    Episode(#[source] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
