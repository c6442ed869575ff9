//! Geometric world model: poses, twist commands, the kinematic transition,
//! the pose distance, and scenario definitions.

mod geometry;
mod scenario;

pub(crate) use geometry::vec3_array;
pub use geometry::{
    apply_action, canonical_action_set, geodesic_angle, rotation_between, snap_to_canonical,
    Action, ActionLimits, Bounds, ControlMode, DistanceMetric, Pose, Tolerance, Vec3,
};
pub use scenario::{
    grasp_succeeded, Goal, Grasp, Scenario, ScenarioError, StateRef, DEFAULT_MAX_KEYPOINTS,
};

use serde::{Deserialize, Serialize};

/// Tunables of the world model that are not part of a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub metric: DistanceMetric,
    pub limits: ActionLimits,
    /// Length (m) that counts as one unit of reward in the Boltzmann models.
    pub reward_unit: f64,
    /// Inputs below this fraction of the mode's magnitude snap to null.
    pub deadzone_fraction: f64,
    pub grasp_tolerance: Tolerance,
    pub keypoint_tolerance: Tolerance,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            metric: DistanceMetric::default(),
            limits: ActionLimits::default(),
            reward_unit: 0.01,
            deadzone_fraction: 0.05,
            grasp_tolerance: Tolerance::GRASP,
            keypoint_tolerance: Tolerance::KEYPOINT,
        }
    }
}

/// Everything needed to step and score poses in one scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct World {
    pub bounds: Bounds,
    pub dt: f64,
    pub config: WorldConfig,
}

impl World {
    pub fn new(scenario: &Scenario, config: WorldConfig) -> Self {
        Self {
            bounds: scenario.bounds,
            dt: scenario.dt,
            config,
        }
    }

    pub fn step(&self, s: &Pose, u: &Action) -> Pose {
        apply_action(s, u, self.dt, &self.bounds)
    }

    pub fn distance(&self, s: &Pose, x: &Pose) -> f64 {
        self.config.metric.distance(s, x)
    }

    pub fn limits(&self) -> &ActionLimits {
        &self.config.limits
    }

    pub fn magnitude(&self, mode: ControlMode) -> f64 {
        self.config.limits.magnitude(mode)
    }

    pub fn action_set(&self, mode: ControlMode) -> [Action; 7] {
        canonical_action_set(mode, self.magnitude(mode))
    }

    pub fn snap(&self, u_raw: &Action, mode: ControlMode) -> Action {
        let m = self.magnitude(mode);
        snap_to_canonical(u_raw, mode, m, self.config.deadzone_fraction * m)
    }
}
