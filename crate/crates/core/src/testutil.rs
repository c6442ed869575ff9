use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::oracle::{random_pose_in, random_scenario};
use crate::workspace::{Bounds, Pose, Scenario, Vec3, World, WorldConfig};

pub fn shaped_scenario(shape: &[usize]) -> Scenario {
    random_scenario(
        shape,
        &mut ChaCha8Rng::seed_from_u64(shape.len() as u64 * 31 + 7),
    )
}

pub fn open_world() -> World {
    World {
        bounds: Bounds::new(Vec3::repeat(-100.0), Vec3::repeat(100.0)),
        dt: 0.05,
        config: WorldConfig::default(),
    }
}

pub fn random_pose(rng: &mut impl Rng) -> Pose {
    random_pose_in(rng, &Bounds::new(Vec3::repeat(-1.0), Vec3::repeat(1.0)))
}
