//! Simulated operators for batch experiments.
//!
//! An operator aims at one grasp. Each tick it picks a canonical command
//! from the Boltzmann distribution over rewards toward that grasp, except
//! that when the robot just moved closer to the grasp it may sit back and
//! let it continue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::action_distribution;
use crate::workspace::{Action, ControlMode, Pose, Scenario, Tolerance, World};

/// Generator behind every simulated operator, recorded in episode logs.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng(seed_from_u64)";

#[derive(Debug, Error, PartialEq)]
pub enum OperatorError {
    #[error("unknown grasp id `{0}`")]
    UnknownGrasp(String),
    #[error("goal_switch_tick and switched_grasp_id must be given together")]
    IncompleteSwitch,
    #[error("p_idle_when_helped must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("beta_op must be nonnegative, got {0}")]
    InvalidBeta(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub intended_grasp_id: String,
    pub beta_op: f64,
    pub p_idle_when_helped: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_switch_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switched_grasp_id: Option<String>,
    pub seed: u64,
}

impl OperatorConfig {
    pub fn validate(&self, scenario: &Scenario) -> Result<(), OperatorError> {
        if !(0.0..=1.0).contains(&self.p_idle_when_helped) {
            return Err(OperatorError::InvalidProbability(self.p_idle_when_helped));
        }
        if !(self.beta_op >= 0.0) {
            return Err(OperatorError::InvalidBeta(self.beta_op));
        }
        if self.goal_switch_tick.is_some() != self.switched_grasp_id.is_some() {
            return Err(OperatorError::IncompleteSwitch);
        }
        for id in std::iter::once(&self.intended_grasp_id).chain(self.switched_grasp_id.as_ref()) {
            if scenario.grasp_state_index(id).is_none() {
                return Err(OperatorError::UnknownGrasp(id.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OperatorState {
    rng: ChaCha8Rng,
    /// Grasp-state index of the grasp currently aimed at.
    pub current_intent: usize,
    last_pose: Option<Pose>,
}

impl OperatorState {
    pub fn new(cfg: &OperatorConfig, scenario: &Scenario) -> Result<Self, OperatorError> {
        cfg.validate(scenario)?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            current_intent: scenario
                .grasp_state_index(&cfg.intended_grasp_id)
                .expect("validated"),
            last_pose: None,
        })
    }

    pub fn intended_pose<'a>(&self, scenario: &'a Scenario) -> &'a Pose {
        scenario.grasp(self.current_intent).grasp_pose()
    }

    pub fn intended_goal(&self, scenario: &Scenario) -> usize {
        scenario.goal_of_state(self.current_intent)
    }

    /// Applies a scheduled intent switch if `tick` is the switch tick.
    pub fn maybe_switch(&mut self, cfg: &OperatorConfig, scenario: &Scenario, tick: u64) {
        if cfg.goal_switch_tick == Some(tick) {
            if let Some(idx) = cfg
                .switched_grasp_id
                .as_deref()
                .and_then(|id| scenario.grasp_state_index(id))
            {
                self.current_intent = idx;
            }
        }
    }
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left the cumulative sum short of 1
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One tick of operator input.
///
/// `s` is the current pose and `last_u_star` the command executed on the
/// previous tick. The intent switch (if scheduled for `tick`) is applied
/// first.
#[allow(clippy::too_many_arguments)]
pub fn operator_act(
    state: &mut OperatorState,
    s: &Pose,
    last_u_star: &Action,
    scenario: &Scenario,
    world: &World,
    cfg: &OperatorConfig,
    mode: ControlMode,
    tick: u64,
) -> Action {
    state.maybe_switch(cfg, scenario, tick);
    let target = *state.intended_pose(scenario);
    let helped = match state.last_pose {
        Some(prev) => {
            !last_u_star.is_null() && world.distance(s, &target) < world.distance(&prev, &target)
        }
        None => false,
    };
    state.last_pose = Some(*s);
    if helped && state.rng.random::<f64>() < cfg.p_idle_when_helped {
        return Action::null();
    }
    let set = world.action_set(mode);
    let probs = action_distribution(world, s, &target, &set, cfg.beta_op);
    set[sample(&mut state.rng, &probs)]
}

/// Translates while farther than `3 * tol.pos` from the intended grasp,
/// rotates once inside that radius, and returns to translation for the final
/// approach when the orientation is already within `tol.rot`.
pub fn mode_policy(
    state: &OperatorState,
    s: &Pose,
    scenario: &Scenario,
    tol: &Tolerance,
) -> ControlMode {
    let target = state.intended_pose(scenario);
    if s.position_error(target) > 3.0 * tol.pos {
        ControlMode::Position
    } else if s.orientation_error(target) >= tol.rot {
        ControlMode::Angular
    } else {
        ControlMode::Position
    }
}
