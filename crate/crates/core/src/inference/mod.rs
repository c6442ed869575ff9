//! Grasp-level goal inference: a hidden Markov model whose hidden states are
//! the scenario's grasps, grouped into one class per goal, observed through a
//! Boltzmann-rational model of operator commands.

mod filter;
mod observation;
mod transition;

pub use filter::{
    forward_step, forward_update, goal_posterior, Belief, GoalPosterior, IntentFilter,
};
pub use observation::{action_distribution, boltzmann, observation_likelihood, reward};
pub use transition::{HmmParams, TransitionMatrix};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(
        "invalid HMM parameters {0:?}: need t_grasp, t_goal >= 0, t_grasp + t_goal <= 1, beta >= 0"
    )]
    InvalidParams(HmmParams),
    #[error("observed action is not in the action set")]
    ActionNotInSet,
    #[error("belief underflowed: the observation stream has numerically zero probability")]
    DegenerateBelief,
    #[error("probabilities must be nonnegative and sum to 1")]
    NotADistribution,
    #[error("transition rows must be nonnegative and sum to 1")]
    NotStochastic,
}
