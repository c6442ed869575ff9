use serde::{Deserialize, Serialize};

use super::observation::observation_likelihood;
use super::{HmmParams, InferenceError, TransitionMatrix};
use crate::workspace::{Action, ControlMode, Pose, Scenario, World};

const UNDERFLOW: f64 = 1e-300;

fn is_distribution(p: &[f64]) -> bool {
    !p.is_empty() && p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// Posterior over grasp states, indexed like [`Scenario::states`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn new(probs: Vec<f64>) -> Result<Self, InferenceError> {
        if is_distribution(&probs) {
            Ok(Belief(probs))
        } else {
            Err(InferenceError::NotADistribution)
        }
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(mut w: Vec<f64>) -> Result<Self, InferenceError> {
        let z: f64 = w.iter().sum();
        if !(z >= UNDERFLOW) || !z.is_finite() {
            return Err(InferenceError::DegenerateBelief);
        }
        for p in &mut w {
            *p /= z;
        }
        Ok(Belief(w))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Posterior over goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalPosterior(Vec<f64>);

impl GoalPosterior {
    pub fn new(probs: Vec<f64>) -> Result<Self, InferenceError> {
        if is_distribution(&probs) {
            Ok(GoalPosterior(probs))
        } else {
            Err(InferenceError::NotADistribution)
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Most probable goal; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.0[0]);
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }
}

/// Sums grasp-state probabilities within each goal.
pub fn goal_posterior(belief: &Belief, scenario: &Scenario) -> GoalPosterior {
    GoalPosterior(
        (0..scenario.num_goals())
            .map(|g| scenario.class(g).map(|i| belief.0[i]).sum())
            .collect(),
    )
}

/// Forward recursion with explicit per-state likelihoods:
/// `b'(x) ∝ lik(x) * sum_x' b(x') T(x' -> x)`.
pub fn forward_step(
    belief: &Belief,
    transition: &TransitionMatrix,
    likelihoods: &[f64],
) -> Result<Belief, InferenceError> {
    let predicted = transition.predict(belief);
    Belief::from_weights(
        predicted
            .iter()
            .zip(likelihoods)
            .map(|(p, l)| p * l)
            .collect(),
    )
}

/// Folds one observed canonical action `u_h`, taken at pose `s`, into the
/// belief. `actions` is the canonical set `u_h` was drawn from.
#[allow(clippy::too_many_arguments)]
pub fn forward_update(
    belief: &Belief,
    u_h: &Action,
    s: &Pose,
    transition: &TransitionMatrix,
    scenario: &Scenario,
    world: &World,
    actions: &[Action],
    beta: f64,
) -> Result<Belief, InferenceError> {
    let likelihoods = (0..scenario.num_states())
        .map(|i| {
            observation_likelihood(world, s, u_h, scenario.grasp(i).grasp_pose(), actions, beta)
        })
        .collect::<Result<Vec<_>, _>>()?;
    forward_step(belief, transition, &likelihoods)
}

/// Per-episode goal inference state: the transition model and the running
/// belief over grasp states.
#[derive(Debug, Clone)]
pub struct IntentFilter {
    transition: TransitionMatrix,
    params: HmmParams,
    belief: Belief,
    updates: usize,
}

impl IntentFilter {
    pub fn new(scenario: &Scenario, params: HmmParams) -> Result<Self, InferenceError> {
        Ok(Self {
            transition: TransitionMatrix::build(scenario, &params)?,
            params,
            belief: Belief::uniform(scenario.num_states()),
            updates: 0,
        })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn transition(&self) -> &TransitionMatrix {
        &self.transition
    }

    /// Number of inference updates applied (nonzero observations).
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn reset(&mut self) {
        self.belief = Belief::uniform(self.belief.len());
        self.updates = 0;
    }

    /// Consumes one tick's snapped input. Null input leaves the belief alone
    /// unless `idle_transition` is set, in which case only the transition
    /// step runs.
    pub fn observe(
        &mut self,
        scenario: &Scenario,
        world: &World,
        s: &Pose,
        u_h: &Action,
        mode: ControlMode,
    ) -> Result<(), InferenceError> {
        if u_h.is_null() {
            if self.params.idle_transition {
                self.belief = Belief::from_weights(self.transition.predict(&self.belief))?;
            }
            return Ok(());
        }
        let actions = world.action_set(mode);
        self.belief = forward_update(
            &self.belief,
            u_h,
            s,
            &self.transition,
            scenario,
            world,
            &actions,
            self.params.beta,
        )?;
        self.updates += 1;
        Ok(())
    }

    pub fn goal_posterior(&self, scenario: &Scenario) -> GoalPosterior {
        goal_posterior(&self.belief, scenario)
    }
}
