//! Quantum actor-critic agent: hybrid policy/value network, n-step advantage
//! updates and asynchronous multi-worker training against shared parameters.

mod network;
mod rollout;
mod shared;
mod train;

pub use network::{
    ActorCritic, Body, BodyKind, NetConfig, PolicyValue, Tower, CHECKPOINT_KIND, N_ACTIONS,
};
pub use rollout::{
    greedy_action, loss_and_grads, n_step_returns, sample_action, RolloutBuffer, Transition,
};
pub use shared::SharedParams;
pub use train::{
    mean_episode_reward, train_async, write_training_log, EpisodeLog, TrainConfig, TrainOutcome,
};
