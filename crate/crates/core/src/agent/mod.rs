//! Double-DQN offloading agent built on a small hand-written MLP.

pub mod checkpoint;
pub mod network;
pub mod replay;
pub mod train;

pub use network::{argmax, Architecture, Dense, ForwardCache, QNetwork};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    act, ddqn_target, episode_seed, loss_and_gradient, train, train_observed, train_step, update,
    EpisodeLog, Optimizer, TrainConfig, Trained, TrainingLog, Updater,
};
