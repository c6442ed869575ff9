use serde::{Deserialize, Serialize};

use crate::assist::EngagementState;
use crate::workspace::{vec3_array, Goal, Pose, Scenario, Vec3};

/// Margin added around a goal's keypoints when sizing its sphere (m).
pub const SPHERE_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualizationCondition {
    #[default]
    None,
    GoalOnly,
    GoalPlusTrajectory,
}

impl VisualizationCondition {
    pub const ALL: [Self; 3] = [Self::None, Self::GoalOnly, Self::GoalPlusTrajectory];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSphere {
    pub goal_id: String,
    #[serde(with = "vec3_array")]
    pub centroid: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisualizationPayload {
    pub goal_sphere: Option<GoalSphere>,
    pub ghost_keypoints: Vec<Pose>,
}

/// Distance from the centroid to the farthest keypoint of any grasp, plus
/// [`SPHERE_MARGIN`].
pub fn sphere_radius(goal: &Goal) -> f64 {
    goal.grasps
        .iter()
        .flat_map(|g| &g.keypoints)
        .map(|k| (k.position - goal.centroid).norm())
        .fold(0.0, f64::max)
        + SPHERE_MARGIN
}

impl VisualizationPayload {
    pub fn build(
        engagement: &EngagementState,
        scenario: &Scenario,
        condition: VisualizationCondition,
    ) -> Self {
        let Some(target) = engagement
            .engaged
            .filter(|_| condition != VisualizationCondition::None)
        else {
            return Self::default();
        };
        let goal = &scenario.goals[target.goal];
        let ghost_keypoints = match condition {
            VisualizationCondition::GoalPlusTrajectory => {
                engagement.remaining_keypoints(scenario).to_vec()
            }
            _ => Vec::new(),
        };
        Self {
            goal_sphere: Some(GoalSphere {
                goal_id: goal.id.clone(),
                centroid: goal.centroid,
                radius: sphere_radius(goal),
            }),
            ghost_keypoints,
        }
    }

    /// Checks the payload against the engagement it was built from.
    pub fn check(
        &self,
        engagement: &EngagementState,
        scenario: &Scenario,
        condition: VisualizationCondition,
    ) -> Result<(), String> {
        let shown = engagement.is_engaged() && condition != VisualizationCondition::None;
        if self.goal_sphere.is_some() != shown {
            return Err(format!(
                "sphere present = {}, expected {shown}",
                self.goal_sphere.is_some()
            ));
        }
        if let (Some(sphere), Some(target)) = (&self.goal_sphere, engagement.engaged) {
            if sphere.goal_id != scenario.goals[target.goal].id {
                return Err(format!(
                    "sphere on `{}`, engaged goal differs",
                    sphere.goal_id
                ));
            }
        }
        let trace =
            engagement.is_engaged() && condition == VisualizationCondition::GoalPlusTrajectory;
        if !trace && !self.ghost_keypoints.is_empty() {
            return Err("ghost keypoints without an engaged trajectory view".into());
        }
        if trace && self.ghost_keypoints != engagement.remaining_keypoints(scenario) {
            return Err("ghost keypoints differ from the remaining keypoints".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assist::AssistTarget;

    fn engaged(goal: usize, grasp: usize, next: usize) -> EngagementState {
        EngagementState {
            engaged: Some(AssistTarget { goal, grasp }),
            next_keypoint: next,
            ..EngagementState::default()
        }
    }

    #[test]
    fn radius_covers_every_keypoint() {
        let s = Scenario::builtin("tabletop4").unwrap();
        for goal in &s.goals {
            let r = sphere_radius(goal);
            let far = goal
                .grasps
                .iter()
                .flat_map(|g| &g.keypoints)
                .map(|k| (k.position - goal.centroid).norm());
            assert!(far.clone().all(|d| d + SPHERE_MARGIN <= r));
            assert!(far.clone().any(|d| d + SPHERE_MARGIN == r));
        }
        // mug: farthest keypoint is mug_side's approach point
        let mug = &s.goals[0];
        let d = (Vec3::new(0.58, 0.3, 0.2) - mug.centroid).norm();
        assert!((sphere_radius(mug) - (d + 0.05)).abs() < 1e-12);
    }

    #[test]
    fn disengaged_is_empty() {
        let s = Scenario::builtin("tabletop4").unwrap();
        for c in VisualizationCondition::ALL {
            let p = VisualizationPayload::build(&EngagementState::default(), &s, c);
            assert_eq!(p, VisualizationPayload::default());
            p.check(&EngagementState::default(), &s, c).unwrap();
        }
    }

    #[test]
    fn conditions_gate_elements() {
        let s = Scenario::builtin("tabletop4").unwrap();
        let e = engaged(0, 1, 1);
        let none = VisualizationPayload::build(&e, &s, VisualizationCondition::None);
        assert!(none.goal_sphere.is_none() && none.ghost_keypoints.is_empty());
        let goal = VisualizationPayload::build(&e, &s, VisualizationCondition::GoalOnly);
        assert_eq!(goal.goal_sphere.as_ref().unwrap().goal_id, "mug");
        assert!(goal.ghost_keypoints.is_empty());
        let traj = VisualizationPayload::build(&e, &s, VisualizationCondition::GoalPlusTrajectory);
        assert_eq!(traj.ghost_keypoints, s.goals[0].grasps[1].keypoints[1..]);
        for c in VisualizationCondition::ALL {
            VisualizationPayload::build(&e, &s, c)
                .check(&e, &s, c)
                .unwrap();
        }
        assert!(traj
            .check(&e, &s, VisualizationCondition::GoalOnly)
            .is_err());
    }

    #[test]
    fn ghosts_shrink_with_advancement() {
        let s = Scenario::builtin("tabletop4").unwrap();
        let counts: Vec<_> = (0..=2)
            .map(|k| {
                VisualizationPayload::build(
                    &engaged(0, 1, k),
                    &s,
                    VisualizationCondition::GoalPlusTrajectory,
                )
                .ghost_keypoints
                .len()
            })
            .collect();
        assert_eq!(counts, [3, 2, 1]);
    }

    #[test]
    fn condition_wire_names() {
        let names: Vec<_> = VisualizationCondition::ALL
            .iter()
            .map(|c| serde_json::to_string(c).unwrap())
            .collect();
        assert_eq!(
            names,
            ["\"none\"", "\"goal_only\"", "\"goal_plus_trajectory\""]
        );
    }
}
