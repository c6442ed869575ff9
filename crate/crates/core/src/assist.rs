//! Assistive controller: decides when to help, which grasp to help with, and
//! steers the end effector through that grasp's keypoints.

use serde::{Deserialize, Serialize};

use crate::inference::{Belief, GoalPosterior};
use crate::workspace::{
    canonical_action_set, rotation_between, Action, ControlMode, Grasp, Pose, Scenario, Tolerance,
    World,
};

/// Goal index and grasp index (within that goal) the controller is assisting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistTarget {
    pub goal: usize,
    pub grasp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementState {
    pub engaged: Option<AssistTarget>,
    pub next_keypoint: usize,
    pub threshold: f64,
    pub hysteresis: f64,
}

impl Default for EngagementState {
    fn default() -> Self {
        Self::new(0.5, 0.0)
    }
}

fn best_grasp(belief: &Belief, scenario: &Scenario, goal: usize) -> usize {
    let class = scenario.class(goal);
    let probs = &belief.probs()[class];
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = k;
        }
    }
    best
}

impl EngagementState {
    pub fn new(threshold: f64, hysteresis: f64) -> Self {
        Self {
            engaged: None,
            next_keypoint: 0,
            threshold,
            hysteresis,
        }
    }

    pub fn is_engaged(&self) -> bool {
        self.engaged.is_some()
    }

    pub fn disengaged(&self) -> Self {
        Self {
            engaged: None,
            next_keypoint: 0,
            ..*self
        }
    }

    pub fn grasp<'a>(&self, scenario: &'a Scenario) -> Option<&'a Grasp> {
        self.engaged
            .map(|t| &scenario.goals[t.goal].grasps[t.grasp])
    }

    /// Re-evaluates engagement against the current posterior.
    ///
    /// While disengaged, engages the most probable goal if its probability is
    /// strictly above the threshold, targeting that goal's most probable
    /// grasp. While engaged, drops out once the engaged goal falls to
    /// `threshold - hysteresis` or below; otherwise follows the goal's most
    /// probable grasp, restarting the keypoint sequence when it changes.
    /// Disengaging and engaging a new goal take two calls.
    pub fn update(&self, posterior: &GoalPosterior, belief: &Belief, scenario: &Scenario) -> Self {
        match self.engaged {
            Some(t) => {
                if posterior.probs()[t.goal] <= self.threshold - self.hysteresis {
                    return self.disengaged();
                }
                let grasp = best_grasp(belief, scenario, t.goal);
                if grasp == t.grasp {
                    *self
                } else {
                    Self {
                        engaged: Some(AssistTarget {
                            goal: t.goal,
                            grasp,
                        }),
                        next_keypoint: 0,
                        ..*self
                    }
                }
            }
            None => {
                let (goal, p) = posterior.argmax();
                if p > self.threshold {
                    Self {
                        engaged: Some(AssistTarget {
                            goal,
                            grasp: best_grasp(belief, scenario, goal),
                        }),
                        next_keypoint: 0,
                        ..*self
                    }
                } else {
                    *self
                }
            }
        }
    }

    /// Moves past every keypoint `s` is already within `tol` of, stopping at
    /// the final one.
    pub fn advance(&self, s: &Pose, grasp: &Grasp, tol: &Tolerance) -> Self {
        let mut next = *self;
        while next.next_keypoint + 1 < grasp.keypoints.len()
            && tol.reached(s, &grasp.keypoints[next.next_keypoint])
        {
            next.next_keypoint += 1;
        }
        next
    }

    /// Keypoints not yet reached, in visiting order.
    pub fn remaining_keypoints<'a>(&self, scenario: &'a Scenario) -> &'a [Pose] {
        match self.grasp(scenario) {
            Some(g) => &g.keypoints[self.next_keypoint.min(g.keypoints.len())..],
            None => &[],
        }
    }

    pub fn current_keypoint<'a>(&self, scenario: &'a Scenario) -> Option<&'a Pose> {
        self.grasp(scenario)
            .map(|g| &g.keypoints[self.next_keypoint])
    }
}

/// How the controller turns a keypoint into a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssistStyle {
    /// Full-speed straight-line motion toward the keypoint, slowing to land on
    /// it exactly within the last tick.
    #[default]
    Continuous,
    /// Best single canonical action from either mode (lowest index on ties).
    Discrete,
}

/// Command toward the next keypoint of the engaged grasp; null when
/// disengaged.
pub fn assist_action(
    s: &Pose,
    state: &EngagementState,
    scenario: &Scenario,
    world: &World,
    style: AssistStyle,
) -> Action {
    let Some(target) = state.current_keypoint(scenario) else {
        return Action::null();
    };
    match style {
        AssistStyle::Continuous => steer_toward(s, target, world),
        AssistStyle::Discrete => best_canonical(s, target, world),
    }
}

fn steer_toward(s: &Pose, target: &Pose, world: &World) -> Action {
    let limits = world.limits();
    let dt = world.dt;
    let dp = target.position - s.position;
    let reach = limits.v_max * dt;
    let dist = dp.norm();
    let linear = if dist <= reach {
        dp / dt
    } else {
        dp * (limits.v_max / dist)
    };

    let rot = rotation_between(&s.orientation, &target.orientation);
    let angle = rot.norm();
    let turn = limits.w_max * dt;
    let angular = if angle <= turn {
        rot / dt
    } else {
        rot * (limits.w_max / angle)
    };

    Action::new(linear, angular).clamped(limits)
}

fn best_canonical(s: &Pose, target: &Pose, world: &World) -> Action {
    let pos = canonical_action_set(ControlMode::Position, world.limits().v_max);
    let ang = canonical_action_set(ControlMode::Angular, world.limits().w_max);
    let candidates = pos.iter().chain(ang.iter().skip(1));
    let mut best = Action::null();
    let mut best_d = world.distance(s, target);
    for u in candidates {
        let d = world.distance(&world.step(s, u), target);
        if d < best_d {
            best = *u;
            best_d = d;
        }
    }
    best
}
