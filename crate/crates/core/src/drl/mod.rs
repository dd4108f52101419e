//! DDPG actor-critic learning with hand-written networks.

pub mod checkpoint;
pub mod ddpg;
pub mod mlp;
pub mod replay;

pub use checkpoint::Checkpoint;
pub use ddpg::{
    diverged, policy_act, sample_initial_state, train, train_multi, ActorCritic, Adam, InputScaling, MultiSeedOutcome,
    Policy, SeedReport, TrainConfig, TrainOutcome,
};
pub use mlp::{Mlp, OutputActivation};
pub use replay::{ReplayBuffer, Transition};
