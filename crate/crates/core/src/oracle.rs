//! Brute-force reference for the belief filter.
//!
//! Computes the filtering posterior by enumerating every hidden grasp-state
//! path and summing joint probabilities, with likelihoods evaluated by a
//! plain (unshifted) softmax. Shares nothing with the filter beyond the
//! kinematics and distance it scores.

use std::time::{Duration, Instant};

use nalgebra::UnitQuaternion;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::inference::{forward_update, Belief, HmmParams, TransitionMatrix};
use crate::workspace::{
    Action, Bounds, ControlMode, Goal, Grasp, Pose, Scenario, Vec3, World, WorldConfig,
};

pub struct Observation {
    pub pose: Pose,
    pub action: Action,
    pub actions: Vec<Action>,
}

pub struct OracleInstance {
    pub scenario: Scenario,
    pub world: World,
    pub transition: TransitionMatrix,
    pub prior: Belief,
    pub beta: f64,
    pub observations: Vec<Observation>,
}

fn random_vec(rng: &mut impl Rng, bounds: &Bounds) -> Vec3 {
    Vec3::from_fn(|i, _| rng.random_range(bounds.min[i]..=bounds.max[i]))
}

pub fn random_pose_in(rng: &mut impl Rng, bounds: &Bounds) -> Pose {
    let axis = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let rot = UnitQuaternion::from_scaled_axis(axis * rng.random_range(0.0..1.5));
    Pose::new(random_vec(rng, bounds), rot)
}

/// A scenario with `shape[g]` grasps on goal `g`, placed at random.
pub fn random_scenario(shape: &[usize], rng: &mut impl Rng) -> Scenario {
    let bounds = Bounds::new(Vec3::new(0.0, -0.6, 0.0), Vec3::new(1.0, 0.6, 0.7));
    let goals = shape
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let centroid = random_vec(rng, &bounds);
            Goal {
                id: format!("g{g}"),
                label: format!("G{g}"),
                centroid,
                grasps: (0..n)
                    .map(|k| Grasp {
                        id: format!("g{g}_{k}"),
                        goal_id: String::new(),
                        keypoints: vec![random_pose_in(rng, &bounds), random_pose_in(rng, &bounds)],
                    })
                    .collect(),
            }
        })
        .collect();
    let start = Pose::from_position(Vec3::new(0.25, 0.0, 0.4));
    Scenario::new("random", goals, start, bounds, 0.05).expect("generated scenario is valid")
}

fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Random instance with at most 4 grasp states and 1 to 6 observations.
pub fn random_instance(rng: &mut impl Rng) -> OracleInstance {
    let n_states = rng.random_range(1..=4usize);
    let n_goals = rng.random_range(1..=n_states);
    let mut shape = vec![1; n_goals];
    for _ in n_goals..n_states {
        let g = rng.random_range(0..n_goals);
        shape[g] += 1;
    }
    let scenario = random_scenario(&shape, rng);
    let world = World::new(&scenario, WorldConfig::default());
    let transition = if rng.random_bool(0.5) {
        let t_goal = rng.random_range(0.0..1.0);
        let params = HmmParams {
            t_grasp: rng.random_range(0.0..1.0) * (1.0 - t_goal),
            t_goal,
            ..HmmParams::default()
        };
        TransitionMatrix::build(&scenario, &params).expect("valid params")
    } else {
        let rows: Vec<Vec<f64>> = (0..n_states)
            .map(|_| random_distribution(rng, n_states))
            .collect();
        TransitionMatrix::from_rows(&rows).expect("rows are stochastic")
    };
    let prior = Belief::new(random_distribution(rng, n_states)).expect("valid prior");
    let beta = rng.random_range(0.0..5.0);
    let steps = rng.random_range(1..=6usize);
    let observations = (0..steps)
        .map(|_| {
            let mode = if rng.random_bool(0.5) {
                ControlMode::Position
            } else {
                ControlMode::Angular
            };
            let actions = world.action_set(mode).to_vec();
            let action = actions[rng.random_range(1..actions.len())];
            Observation {
                pose: random_pose_in(rng, &scenario.bounds),
                action,
                actions,
            }
        })
        .collect();
    OracleInstance {
        scenario,
        world,
        transition,
        prior,
        beta,
        observations,
    }
}

fn naive_likelihood(inst: &OracleInstance, obs: &Observation, state: usize) -> f64 {
    let x = inst.scenario.grasp(state).grasp_pose();
    let w = &inst.world;
    let score = |u: &Action| {
        let r = w.distance(&obs.pose, x) - w.distance(&w.step(&obs.pose, u), x);
        (inst.beta * r / w.config.reward_unit).exp()
    };
    let z: f64 = obs.actions.iter().map(score).sum();
    score(&obs.action) / z
}

/// Filtering posterior over the final hidden state by summing over all
/// `n^(T+1)` state paths.
pub fn path_sum_posterior(inst: &OracleInstance) -> Vec<f64> {
    let n = inst.scenario.num_states();
    let steps = inst.observations.len();
    let lik: Vec<Vec<f64>> = inst
        .observations
        .iter()
        .map(|o| (0..n).map(|x| naive_likelihood(inst, o, x)).collect())
        .collect();
    let mut marginal = vec![0.0; n];
    let mut path = vec![0usize; steps + 1];
    let total = n.pow(steps as u32 + 1);
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % n;
            c /= n;
        }
        let mut p = inst.prior.probs()[path[0]];
        for t in 1..=steps {
            p *= inst.transition.get(path[t - 1], path[t]) * lik[t - 1][path[t]];
        }
        marginal[path[steps]] += p;
    }
    let z: f64 = marginal.iter().sum();
    marginal.into_iter().map(|m| m / z).collect()
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub instances: usize,
    pub max_abs_error: f64,
    pub elapsed: Duration,
}

/// Runs the filter against the path-sum oracle on `instances` random cases.
pub fn check_hmm(instances: usize, seed: u64) -> OracleReport {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs_error: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng);
        let expect = path_sum_posterior(&inst);
        let mut b = inst.prior.clone();
        let mut failed = false;
        for o in &inst.observations {
            match forward_update(
                &b,
                &o.action,
                &o.pose,
                &inst.transition,
                &inst.scenario,
                &inst.world,
                &o.actions,
                inst.beta,
            ) {
                Ok(next) => b = next,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            max_abs_error = f64::INFINITY;
            continue;
        }
        for (x, y) in b.probs().iter().zip(&expect) {
            max_abs_error = max_abs_error.max((x - y).abs());
        }
    }
    OracleReport {
        instances,
        max_abs_error,
        elapsed: start.elapsed(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_agrees_with_hand_bayes() {
        // one state: posterior is trivially 1
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inst = random_instance(&mut rng);
        while inst.scenario.num_states() != 1 {
            inst = random_instance(&mut rng);
        }
        assert_eq!(path_sum_posterior(&inst), vec![1.0]);
    }

    #[test]
    fn check_hmm_is_tight() {
        let r = check_hmm(50, 11);
        assert!(r.max_abs_error <= 1e-9, "{r:?}");
    }
}
