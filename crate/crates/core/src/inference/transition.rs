use serde::{Deserialize, Serialize};

use super::{Belief, InferenceError};
use crate::workspace::Scenario;

/// Switching parameters of the grasp-state chain plus the inference
/// rationality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmParams {
    /// Probability of switching to another grasp of the same goal per step.
    pub t_grasp: f64,
    /// Probability of switching to a different goal per step.
    pub t_goal: f64,
    /// Boltzmann rationality of the observation model.
    pub beta: f64,
    /// Apply the transition step on ticks without operator input.
    pub idle_transition: bool,
}

impl Default for HmmParams {
    fn default() -> Self {
        Self {
            t_grasp: 0.01,
            t_goal: 0.0,
            beta: 1.0,
            idle_transition: false,
        }
    }
}

impl HmmParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let ok = self.t_grasp >= 0.0
            && self.t_goal >= 0.0
            && self.t_grasp + self.t_goal <= 1.0
            && self.beta >= 0.0
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(InferenceError::InvalidParams(*self))
        }
    }
}

/// Row-stochastic matrix; `get(from, to)` is the probability of moving from
/// grasp state `from` to `to` in one step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds the class-structured transition model.
    ///
    /// A state keeps `1 - (t_grasp + t_goal)` on itself, spreads `t_grasp`
    /// evenly over the other grasps of its goal, and gives each other goal an
    /// equal share of `t_goal`, split evenly across that goal's grasps.
    /// When a goal has a single grasp its `t_grasp` share stays on the state.
    /// With a single goal, `t_goal` is spread like `t_grasp` (or stays on the
    /// state if that goal also has a single grasp).
    pub fn build(scenario: &Scenario, params: &HmmParams) -> Result<Self, InferenceError> {
        params.validate()?;
        let n = scenario.num_states();
        let goals = scenario.num_goals();
        let mut entries = vec![0.0; n * n];
        for from in 0..n {
            let own = scenario.goal_of_state(from);
            let class = scenario.class(own);
            let siblings = class.len() - 1;
            let row = &mut entries[from * n..(from + 1) * n];

            let mut within = params.t_grasp;
            let mut stay = 1.0 - (params.t_grasp + params.t_goal);
            if goals > 1 {
                let per_goal = params.t_goal / (goals - 1) as f64;
                for other in (0..goals).filter(|&g| g != own) {
                    let c = scenario.class(other);
                    let share = per_goal / c.len() as f64;
                    for to in c {
                        row[to] = share;
                    }
                }
            } else {
                within += params.t_goal;
            }
            if siblings > 0 {
                let share = within / siblings as f64;
                for to in class.filter(|&to| to != from) {
                    row[to] = share;
                }
            } else {
                stay += within;
            }
            row[from] = stay;
        }
        Ok(Self { n, entries })
    }

    /// Wraps explicit rows, checking they form a stochastic matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, InferenceError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n
                || row.iter().any(|&p| !(p >= 0.0))
                || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
            {
                return Err(InferenceError::NotStochastic);
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self { n, entries }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.n + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.n..(from + 1) * self.n]
    }

    /// One prediction step: `out[x] = sum_x' b(x') T(x' -> x)`.
    pub fn predict(&self, belief: &Belief) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (from, &b) in belief.probs().iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(from)) {
                *o += b * t;
            }
        }
        out
    }
}
