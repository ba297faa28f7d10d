//! Deep Q-learning at the primitive-action timescale: replay, exploration,
//! double-DQN targets, the training loop and greedy evaluation.

mod chain;
mod config;
mod eval;
mod learner;
mod qfunc;
mod replay;
mod train;

use thiserror::Error;

use crate::nn::NnError;

pub use chain::ChainMdp;
pub use config::{epsilon_at, TrainConfig};
pub use eval::{episode_seed, evaluate, ConstantPolicy, EpisodeStats, GreedyPolicy, Policy, TrajectoryPoint};
pub use learner::{
    greedy_action, td_targets, train_step, Decision, DecisionProcess, EpisodeLog, Learner, Primitive, TrainingLog,
    Transition, SEED_STREAM_EPISODE_BASE, SEED_STREAM_EXPLORE, SEED_STREAM_INIT,
};
pub use qfunc::{NetworkQ, QFunction, TableQ};
pub use replay::ReplayBuffer;
pub use train::{train_low_level, train_network};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("replay buffer holds {len} items, cannot sample a batch of {batch_size}")]
    Underfull { len: usize, batch_size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
