use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::arbitration::{blend, ControllerConfig};
use crate::assist::{assist_action, EngagementState};
use crate::inference::{Belief, GoalPosterior, HmmParams, InferenceError, IntentFilter};
use crate::workspace::{Action, ControlMode, Pose, Scenario, World, WorldConfig};

/// Input for one tick: the operator's raw command, the mode it was issued in,
/// and which goal the operator is currently trying to grasp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickInput {
    pub mode: ControlMode,
    pub u_h_raw: Action,
    pub target_goal: usize,
    /// New arbitration weight taking effect from this tick on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl TickInput {
    pub fn new(mode: ControlMode, u_h_raw: Action, target_goal: usize) -> Self {
        Self {
            mode,
            u_h_raw,
            target_goal,
            alpha: None,
        }
    }
}

/// Everything derived during one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub mode: ControlMode,
    pub target_goal: usize,
    pub alpha: f64,
    pub u_h_raw: Action,
    pub u_h_snapped: Action,
    pub u_r: Action,
    pub u_star: Action,
    /// Pose after executing `u_star`.
    pub pose: Pose,
    pub belief: Belief,
    pub goal_posterior: GoalPosterior,
    pub engagement: EngagementState,
    /// State index of the target goal's grasp achieved this tick, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasped: Option<usize>,
}

impl TickRecord {
    pub fn is_idle(&self) -> bool {
        self.u_h_snapped.is_null()
    }
}

/// The shared-control loop for one episode: inference, engagement, assist,
/// blending and kinematics, advanced one tick at a time.
#[derive(Debug, Clone)]
pub struct SharedControl {
    scenario: Arc<Scenario>,
    world: World,
    controller: ControllerConfig,
    filter: IntentFilter,
    engagement: EngagementState,
    pose: Pose,
    tick: u64,
    last_u_star: Action,
}

impl SharedControl {
    pub fn new(
        scenario: Arc<Scenario>,
        controller: ControllerConfig,
        hmm: HmmParams,
        world: WorldConfig,
    ) -> Result<Self, InferenceError> {
        let filter = IntentFilter::new(&scenario, hmm)?;
        Ok(Self {
            world: World::new(&scenario, world),
            engagement: EngagementState::new(controller.threshold, controller.hysteresis),
            pose: scenario.start_pose,
            scenario,
            controller,
            filter,
            tick: 0,
            last_u_star: Action::null(),
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn last_u_star(&self) -> &Action {
        &self.last_u_star
    }

    pub fn controller(&self) -> &ControllerConfig {
        &self.controller
    }

    pub fn engagement(&self) -> &EngagementState {
        &self.engagement
    }

    pub fn belief(&self) -> &Belief {
        self.filter.belief()
    }

    pub fn inference_updates(&self) -> usize {
        self.filter.updates()
    }

    pub fn goal_posterior(&self) -> GoalPosterior {
        self.filter.goal_posterior(&self.scenario)
    }

    /// Arbitration changes apply from the next tick on.
    pub fn set_alpha(&mut self, alpha: f64) {
        self.controller.alpha = alpha;
    }

    /// State index of a `goal` grasp that `s` satisfies, if any.
    pub fn grasped(&self, s: &Pose, goal: usize) -> Option<usize> {
        let tol = &self.world.config.grasp_tolerance;
        self.scenario
            .class(goal)
            .find(|&i| self.scenario.grasp(i).succeeded(s, tol))
    }

    pub fn step(&mut self, input: &TickInput) -> Result<TickRecord, HarnessError> {
        if let Some(alpha) = input.alpha {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(HarnessError::Config(format!(
                    "alpha {alpha} outside [0, 1]"
                )));
            }
            self.controller.alpha = alpha;
        }
        if input.target_goal >= self.scenario.num_goals() {
            return Err(HarnessError::Config(format!(
                "target goal {} out of range",
                input.target_goal
            )));
        }
        let scenario = &*self.scenario;
        let world = &self.world;
        let limits = world.limits();
        let mode = input.mode;
        let u_h = input.u_h_raw.restricted_to(mode).clamped(limits);
        let snapped = world.snap(&input.u_h_raw, mode);

        self.filter
            .observe(scenario, world, &self.pose, &snapped, mode)?;
        let posterior = self.filter.goal_posterior(scenario);
        let kp_tol = world.config.keypoint_tolerance;
        let mut engagement = self
            .engagement
            .update(&posterior, self.filter.belief(), scenario);
        if let Some(g) = engagement.grasp(scenario) {
            engagement = engagement.advance(&self.pose, g, &kp_tol);
        }

        let u_r = assist_action(
            &self.pose,
            &engagement,
            scenario,
            world,
            self.controller.assist_style,
        );
        let u_star = blend(
            &u_h,
            &self.controller.shape_assist(&u_r, mode),
            self.controller.alpha,
            limits,
        );
        let pose = world.step(&self.pose, &u_star);
        if let Some(g) = engagement.grasp(scenario) {
            engagement = engagement.advance(&pose, g, &kp_tol);
        }

        let record = TickRecord {
            tick: self.tick,
            mode,
            target_goal: input.target_goal,
            alpha: self.controller.alpha,
            u_h_raw: input.u_h_raw,
            u_h_snapped: snapped,
            u_r,
            u_star,
            pose,
            belief: self.filter.belief().clone(),
            goal_posterior: posterior,
            engagement,
            grasped: self.grasped(&pose, input.target_goal),
        };
        self.engagement = engagement;
        self.pose = pose;
        self.last_u_star = u_star;
        self.tick += 1;
        Ok(record)
    }
}
