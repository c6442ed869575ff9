use super::InferenceError;
use crate::workspace::{Action, Pose, World};

/// Progress toward `x` made by taking `u` in `s` for one tick, in meters
/// of pose distance.
pub fn reward(world: &World, s: &Pose, u: &Action, x: &Pose) -> f64 {
    world.distance(s, x) - world.distance(&world.step(s, u), x)
}

/// Softmax of `beta * rewards`, shifted by the maximum before exponentiating.
pub fn boltzmann(rewards: &[f64], beta: f64) -> Vec<f64> {
    let logits: Vec<f64> = rewards.iter().map(|r| beta * r).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Boltzmann distribution over `actions` for an operator in `s` heading to
/// `x`. Rewards are measured in units of `world.config.reward_unit`.
pub fn action_distribution(
    world: &World,
    s: &Pose,
    x: &Pose,
    actions: &[Action],
    beta: f64,
) -> Vec<f64> {
    let unit = world.config.reward_unit;
    let rewards: Vec<f64> = actions
        .iter()
        .map(|u| reward(world, s, u, x) / unit)
        .collect();
    boltzmann(&rewards, beta)
}

/// Probability that an operator targeting `x` picks `u_h` out of `actions`.
pub fn observation_likelihood(
    world: &World,
    s: &Pose,
    u_h: &Action,
    x: &Pose,
    actions: &[Action],
    beta: f64,
) -> Result<f64, InferenceError> {
    let idx = actions
        .iter()
        .position(|a| a == u_h)
        .ok_or(InferenceError::ActionNotInSet)?;
    Ok(action_distribution(world, s, x, actions, beta)[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{open_world, random_pose};
    use crate::workspace::{canonical_action_set, ControlMode, Vec3};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    #[test]
    fn reward_examples() {
        let w = World {
            dt: 1.0,
            ..open_world()
        };
        let s = Pose::identity();
        let x = Pose::from_position(Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(reward(&w, &s, &Action::null(), &x), 0.0);
        let fwd = Action::linear(Vec3::new(0.2, 0.0, 0.0));
        assert!((reward(&w, &s, &fwd, &x) - 0.2).abs() < 1e-15);
        let back = Action::linear(Vec3::new(-0.2, 0.0, 0.0));
        assert!((reward(&w, &s, &back, &x) + 0.2).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(boltzmann(&[0.3, 0.3, 0.3, 0.3], 1.0), vec![0.25; 4]);
        let p = boltzmann(&[0.0, LN_2], 1.0);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        let p = boltzmann(&[0.0, 0.0, LN_2], 1.0);
        assert!(
            (p[0] - 0.25).abs() < 1e-15
                && (p[1] - 0.25).abs() < 1e-15
                && (p[2] - 0.5).abs() < 1e-15
        );
    }

    #[test]
    fn softmax_survives_huge_rewards() {
        let p = boltzmann(&[1e4, 1e4 - LN_2], 1.0);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn equal_rewards_when_target_is_current_pose_and_rotation_is_ignored() {
        // rotations do not move position, and with rot_weight 0 every angular action scores 0
        let mut w = open_world();
        w.config.metric.rot_weight = 0.0;
        let s = Pose::identity();
        let set = canonical_action_set(ControlMode::Angular, 1.0);
        for u in &set {
            let p = observation_likelihood(&w, &s, u, &s, &set, 1.0).unwrap();
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_two_action_case() {
        // rewards 0 and ln 2 reward units
        let mut w = open_world();
        w.dt = 1.0;
        w.config.reward_unit = 1.0;
        let s = Pose::identity();
        let x = Pose::from_position(Vec3::new(10.0, 0.0, 0.0));
        let set = [Action::null(), Action::linear(Vec3::new(LN_2, 0.0, 0.0))];
        let p = observation_likelihood(&w, &s, &set[1], &x, &set, 1.0).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_foreign_action() {
        let w = open_world();
        let set = canonical_action_set(ControlMode::Position, 0.25);
        let odd = Action::linear(Vec3::new(0.1, 0.0, 0.0));
        assert!(matches!(
            observation_likelihood(&w, &Pose::identity(), &odd, &Pose::identity(), &set, 1.0),
            Err(InferenceError::ActionNotInSet)
        ));
    }

    proptest! {
        #[test]
        fn likelihood_normalized_and_shift_invariant(seed in any::<u64>(), beta in 0.0f64..20.0, shift in -50.0f64..50.0, angular in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = open_world();
            let s = random_pose(&mut rng);
            let x = random_pose(&mut rng);
            let mode = if angular { ControlMode::Angular } else { ControlMode::Position };
            let set = w.action_set(mode);
            let total: f64 = set.iter().map(|u| observation_likelihood(&w, &s, u, &x, &set, beta).unwrap()).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            let unit = w.config.reward_unit;
            let rewards: Vec<f64> = set.iter().map(|u| reward(&w, &s, u, &x) / unit).collect();
            let shifted: Vec<f64> = rewards.iter().map(|r| r + shift).collect();
            let a = boltzmann(&rewards, beta);
            let b = boltzmann(&shifted, beta);
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() <= 1e-9);
            }
        }
    }
}
