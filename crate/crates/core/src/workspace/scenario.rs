use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{vec3_array, Bounds, Pose, Tolerance, Vec3};

pub const DEFAULT_MAX_KEYPOINTS: usize = 3;

const TABLETOP4: &str = include_str!("../../scenarios/tabletop4.json");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario has no goals")]
    NoGoals,
    #[error("goal `{0}` has no grasps")]
    EmptyGoal(String),
    #[error("duplicate goal id `{0}`")]
    DuplicateGoal(String),
    #[error("duplicate grasp id `{0}`")]
    DuplicateGrasp(String),
    #[error("grasp `{id}` has {count} keypoints, expected 2..={max}")]
    KeypointCount {
        id: String,
        count: usize,
        max: usize,
    },
    #[error("keypoint {index} of grasp `{id}` lies outside the workspace bounds")]
    KeypointOutOfBounds { id: String, index: usize },
    #[error("start pose lies outside the workspace bounds")]
    StartOutOfBounds,
    #[error("invalid bounds")]
    InvalidBounds,
    #[error("dt must be positive, got {0}")]
    InvalidDt(f64),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grasp {
    pub id: String,
    /// Filled from the enclosing goal when loading.
    #[serde(default)]
    pub goal_id: String,
    /// Ordered waypoints; the last one is the grasp pose itself.
    pub keypoints: Vec<Pose>,
}

impl Grasp {
    pub fn grasp_pose(&self) -> &Pose {
        self.keypoints
            .last()
            .expect("validated grasp has keypoints")
    }

    pub fn succeeded(&self, s: &Pose, tol: &Tolerance) -> bool {
        tol.reached(s, self.grasp_pose())
    }
}

/// True iff `s` is within tolerance of the grasp's final keypoint (strict on
/// both position and orientation).
pub fn grasp_succeeded(s: &Pose, grasp: &Grasp, eps_pos: f64, eps_rot: f64) -> bool {
    grasp.succeeded(
        s,
        &Tolerance {
            pos: eps_pos,
            rot: eps_rot,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub id: String,
    pub label: String,
    #[serde(with = "vec3_array")]
    pub centroid: Vec3,
    pub grasps: Vec<Grasp>,
}

fn default_dt() -> f64 {
    0.05
}

fn default_max_keypoints() -> usize {
    DEFAULT_MAX_KEYPOINTS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
    goals: Vec<Goal>,
    start_pose: Pose,
    bounds: Bounds,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_max_keypoints")]
    max_keypoints: usize,
}

/// Grasp state `index` of the HMM belongs to goal `goal` and is that goal's
/// `grasp`-th grasp.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateRef {
    pub goal: usize,
    pub grasp: usize,
}

/// A validated tabletop scene: goals, their grasps, and the workspace.
///
/// Grasp states are numbered goal-major in file order; every belief vector
/// uses that numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct Scenario {
    pub name: String,
    pub notes: Option<String>,
    pub goals: Vec<Goal>,
    pub start_pose: Pose,
    pub bounds: Bounds,
    pub dt: f64,
    pub max_keypoints: usize,
    states: Vec<StateRef>,
    offsets: Vec<usize>,
}

impl TryFrom<ScenarioFile> for Scenario {
    type Error = ScenarioError;

    fn try_from(f: ScenarioFile) -> Result<Self, ScenarioError> {
        let mut s = Scenario::build(
            f.name,
            f.goals,
            f.start_pose,
            f.bounds,
            f.dt,
            f.max_keypoints,
        )?;
        s.notes = f.notes;
        Ok(s)
    }
}

impl From<Scenario> for ScenarioFile {
    fn from(s: Scenario) -> Self {
        ScenarioFile {
            name: s.name,
            notes: s.notes,
            goals: s.goals,
            start_pose: s.start_pose,
            bounds: s.bounds,
            dt: s.dt,
            max_keypoints: s.max_keypoints,
        }
    }
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        goals: Vec<Goal>,
        start_pose: Pose,
        bounds: Bounds,
        dt: f64,
    ) -> Result<Self, ScenarioError> {
        Self::build(
            name.into(),
            goals,
            start_pose,
            bounds,
            dt,
            DEFAULT_MAX_KEYPOINTS,
        )
    }

    fn build(
        name: String,
        mut goals: Vec<Goal>,
        start_pose: Pose,
        bounds: Bounds,
        dt: f64,
        max_keypoints: usize,
    ) -> Result<Self, ScenarioError> {
        for g in &mut goals {
            for grasp in &mut g.grasps {
                grasp.goal_id = g.id.clone();
            }
        }
        let mut s = Scenario {
            name,
            notes: None,
            goals,
            start_pose,
            bounds,
            dt,
            max_keypoints: max_keypoints.max(2),
            states: Vec::new(),
            offsets: Vec::new(),
        };
        s.validate()?;
        s.index();
        Ok(s)
    }

    pub fn with_max_keypoints(mut self, max: usize) -> Result<Self, ScenarioError> {
        self.max_keypoints = max.max(2);
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Bundled scenarios by name.
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        match name {
            "tabletop4" => Self::from_json(TABLETOP4),
            other => Err(ScenarioError::Unknown(other.to_string())),
        }
    }

    pub fn builtin_names() -> &'static [&'static str] {
        &["tabletop4"]
    }

    /// `name_or_path` is either a bundled scenario name or a path to a JSON file.
    pub fn resolve(name_or_path: &str, base: Option<&Path>) -> Result<Self, ScenarioError> {
        if Self::builtin_names().contains(&name_or_path) {
            return Self::builtin(name_or_path);
        }
        let path = Path::new(name_or_path);
        let path = match base {
            Some(b) if path.is_relative() => b.join(path),
            _ => path.to_path_buf(),
        };
        Self::load(&path)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.goals.is_empty() {
            return Err(ScenarioError::NoGoals);
        }
        if !self.bounds.is_valid() {
            return Err(ScenarioError::InvalidBounds);
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ScenarioError::InvalidDt(self.dt));
        }
        if !self.bounds.contains(&self.start_pose.position) {
            return Err(ScenarioError::StartOutOfBounds);
        }
        let mut goal_ids = HashSet::new();
        let mut grasp_ids = HashSet::new();
        for g in &self.goals {
            if !goal_ids.insert(g.id.as_str()) {
                return Err(ScenarioError::DuplicateGoal(g.id.clone()));
            }
            if g.grasps.is_empty() {
                return Err(ScenarioError::EmptyGoal(g.id.clone()));
            }
            for grasp in &g.grasps {
                if !grasp_ids.insert(grasp.id.as_str()) {
                    return Err(ScenarioError::DuplicateGrasp(grasp.id.clone()));
                }
                let n = grasp.keypoints.len();
                if n < 2 || n > self.max_keypoints {
                    return Err(ScenarioError::KeypointCount {
                        id: grasp.id.clone(),
                        count: n,
                        max: self.max_keypoints,
                    });
                }
                if let Some(index) = grasp
                    .keypoints
                    .iter()
                    .position(|k| !self.bounds.contains(&k.position))
                {
                    return Err(ScenarioError::KeypointOutOfBounds {
                        id: grasp.id.clone(),
                        index,
                    });
                }
            }
        }
        Ok(())
    }

    fn index(&mut self) {
        self.states.clear();
        self.offsets.clear();
        for (gi, g) in self.goals.iter().enumerate() {
            self.offsets.push(self.states.len());
            for k in 0..g.grasps.len() {
                self.states.push(StateRef { goal: gi, grasp: k });
            }
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_goals(&self) -> usize {
        self.goals.len()
    }

    pub fn states(&self) -> &[StateRef] {
        &self.states
    }

    pub fn state(&self, index: usize) -> StateRef {
        self.states[index]
    }

    pub fn goal_of_state(&self, index: usize) -> usize {
        self.states[index].goal
    }

    /// Grasp-state indices belonging to goal `goal`.
    pub fn class(&self, goal: usize) -> std::ops::Range<usize> {
        let start = self.offsets[goal];
        start..start + self.goals[goal].grasps.len()
    }

    pub fn state_index(&self, goal: usize, grasp: usize) -> usize {
        self.offsets[goal] + grasp
    }

    pub fn grasp(&self, state: usize) -> &Grasp {
        let r = self.states[state];
        &self.goals[r.goal].grasps[r.grasp]
    }

    pub fn grasps(&self) -> impl Iterator<Item = &Grasp> {
        self.goals.iter().flat_map(|g| g.grasps.iter())
    }

    pub fn goal_index(&self, id: &str) -> Option<usize> {
        self.goals.iter().position(|g| g.id == id)
    }

    pub fn grasp_state_index(&self, id: &str) -> Option<usize> {
        self.grasps().position(|g| g.id == id)
    }
}
