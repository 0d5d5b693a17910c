//! buslab-rl — DQN holding agents with knowledge sharing.
//!
//! Every stop agent in a bus system is homogeneous: one Q-network parameter
//! set, one shared replay buffer. Decisions are captured as transitions
//! matched across one action step, pushed to the shared buffer, and trained
//! with uniform minibatch TD updates after each episode.

mod buffer;
mod net;
mod train;

pub use buffer::ReplayBuffer;
pub use net::{load_checkpoint, save_checkpoint, CheckpointError, Gradients, QNetwork, Scalar};
pub use train::{
    dqn_update, epsilon, run_test, run_test_detailed, run_training, select_action,
    EpsilonGreedyPolicy, FnPolicy, GreedyPolicy, Optimizer, Policy, StateNormalizer,
    StreamTransition, TrainConfig, TrainError, TrainResult, TrajStep, Transition,
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(epsilon(0, &cfg), 1.0);
        assert_eq!(epsilon(50, &cfg), 0.02);
        assert_eq!(epsilon(60, &cfg), 0.02);
        let mid = epsilon(25, &cfg);
        assert!((mid - 0.51).abs() < 1e-12);
    }
}
