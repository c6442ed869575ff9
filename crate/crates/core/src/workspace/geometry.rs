//! Poses, twist commands and the end-effector kinematics they drive.

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Vec3 = Vector3<f64>;

/// End-effector pose: position in meters, orientation as a unit quaternion.
///
/// Serialized as `{"position": [x, y, z], "orientation": [w, x, y, z]}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(position: Vec3, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn identity() -> Self {
        Self::from_position(Vec3::zeros())
    }

    pub fn position_error(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    pub fn orientation_error(&self, other: &Pose) -> f64 {
        geodesic_angle(&self.orientation, &other.orientation)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.orientation.quaternion();
        PoseRepr {
            position: [self.position.x, self.position.y, self.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(deserializer)?;
        let [w, x, y, z] = repr.orientation;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-6 {
            return Err(serde::de::Error::custom(
                "orientation quaternion must be nonzero and finite",
            ));
        }
        // leave already-unit input untouched so JSON round trips are exact
        let orientation = if (norm - 1.0).abs() < 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Pose::new(Vec3::from(repr.position), orientation))
    }
}

/// Rotation angle in `[0, pi]` separating two orientations.
///
/// Uses `2 atan2(|v|, |w|)` of the relative quaternion, which stays accurate
/// near zero where the `acos` form loses precision.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let rel = a.inverse() * b;
    let q = rel.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}

/// 6-axis twist command: linear velocity (m/s) and angular velocity (rad/s),
/// both expressed in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    #[serde(with = "vec3_array")]
    pub linear: Vec3,
    #[serde(with = "vec3_array")]
    pub angular: Vec3,
}

impl Default for Action {
    fn default() -> Self {
        Self::null()
    }
}

impl Action {
    pub fn null() -> Self {
        Self {
            linear: Vec3::zeros(),
            angular: Vec3::zeros(),
        }
    }

    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn linear(linear: Vec3) -> Self {
        Self::new(linear, Vec3::zeros())
    }

    pub fn angular(angular: Vec3) -> Self {
        Self::new(Vec3::zeros(), angular)
    }

    pub fn is_null(&self) -> bool {
        self.linear == Vec3::zeros() && self.angular == Vec3::zeros()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.linear * k, self.angular * k)
    }

    /// The part of this command on `mode`'s three axes.
    pub fn axes(&self, mode: ControlMode) -> Vec3 {
        match mode {
            ControlMode::Position => self.linear,
            ControlMode::Angular => self.angular,
        }
    }

    /// Zeroes every axis outside `mode`.
    pub fn restricted_to(&self, mode: ControlMode) -> Self {
        Self::on_axes(mode, self.axes(mode))
    }

    pub fn on_axes(mode: ControlMode, v: Vec3) -> Self {
        match mode {
            ControlMode::Position => Self::linear(v),
            ControlMode::Angular => Self::angular(v),
        }
    }

    /// Scales each axis group down so it respects `limits`.
    pub fn clamped(&self, limits: &ActionLimits) -> Self {
        Self::new(
            cap_norm(self.linear, limits.v_max),
            cap_norm(self.angular, limits.w_max),
        )
    }

    pub fn within(&self, limits: &ActionLimits) -> bool {
        self.linear.norm() <= limits.v_max * (1.0 + 1e-12)
            && self.angular.norm() <= limits.w_max * (1.0 + 1e-12)
    }
}

fn cap_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Magnitude bounds on each axis group of an [`Action`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLimits {
    /// m/s
    pub v_max: f64,
    /// rad/s
    pub w_max: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self {
            v_max: 0.25,
            w_max: 1.0,
        }
    }
}

impl ActionLimits {
    pub fn magnitude(&self, mode: ControlMode) -> f64 {
        match mode {
            ControlMode::Position => self.v_max,
            ControlMode::Angular => self.w_max,
        }
    }
}

/// Modal teleoperation: the operator commands either translation or rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    #[default]
    Position,
    Angular,
}

impl ControlMode {
    pub fn toggled(self) -> Self {
        match self {
            ControlMode::Position => ControlMode::Angular,
            ControlMode::Angular => ControlMode::Position,
        }
    }
}

/// Axis-aligned workspace box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    #[serde(with = "vec3_array")]
    pub min: Vec3,
    #[serde(with = "vec3_array")]
    pub max: Vec3,
}

impl Bounds {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] <= self.max[i]
        })
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }
}

/// Kinematic transition: integrates `u` over `dt` seconds from `s`.
///
/// Position is clamped to `bounds`. The rotation `angular * dt` is applied
/// in the world frame and the result renormalized.
pub fn apply_action(s: &Pose, u: &Action, dt: f64, bounds: &Bounds) -> Pose {
    debug_assert!(dt > 0.0, "dt must be positive");
    if u.is_null() {
        return *s;
    }
    let position = bounds.clamp(s.position + u.linear * dt);
    let delta = UnitQuaternion::from_scaled_axis(u.angular * dt);
    let orientation = UnitQuaternion::new_normalize((delta * s.orientation).into_inner());
    Pose::new(position, orientation)
}

/// Rotation vector (axis times angle) taking `from` onto `to` in the world frame.
pub fn rotation_between(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vec3 {
    let rel = to * from.inverse();
    let q = rel.quaternion();
    // pick the short way round
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-15 {
        return Vec3::zeros();
    }
    let angle = 2.0 * s.atan2(w);
    Unit::new_normalize(v).into_inner() * angle
}

/// Pose distance: Euclidean translation plus `rot_weight` (m/rad) times the
/// geodesic rotation angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceMetric {
    pub rot_weight: f64,
}

impl Default for DistanceMetric {
    fn default() -> Self {
        Self { rot_weight: 0.1 }
    }
}

impl DistanceMetric {
    pub fn distance(&self, s: &Pose, x: &Pose) -> f64 {
        s.position_error(x) + self.rot_weight * s.orientation_error(x)
    }
}

/// The seven canonical commands for `mode`: null, then `+x, -x, +y, -y, +z, -z`.
pub fn canonical_action_set(mode: ControlMode, magnitude: f64) -> [Action; 7] {
    debug_assert!(magnitude > 0.0);
    let axis = |i: usize, sign: f64| {
        let mut v = Vec3::zeros();
        v[i] = sign * magnitude;
        Action::on_axes(mode, v)
    };
    [
        Action::null(),
        axis(0, 1.0),
        axis(0, -1.0),
        axis(1, 1.0),
        axis(1, -1.0),
        axis(2, 1.0),
        axis(2, -1.0),
    ]
}

/// Maps a continuous command to the canonical action it points most along.
///
/// Only `mode`'s axes are considered. Inputs whose norm on those axes falls
/// below `deadzone` snap to the null action; ties go to the earliest entry of
/// the canonical ordering.
pub fn snap_to_canonical(
    u_raw: &Action,
    mode: ControlMode,
    magnitude: f64,
    deadzone: f64,
) -> Action {
    let v = u_raw.axes(mode);
    let set = canonical_action_set(mode, magnitude);
    if !(v.norm() >= deadzone) {
        return set[0];
    }
    let mut best = 0;
    let mut best_dot = 0.0;
    for (i, a) in set.iter().enumerate().skip(1) {
        let d = a.axes(mode).dot(&v);
        if d > best_dot {
            best = i;
            best_dot = d;
        }
    }
    set[best]
}

/// Position and orientation tolerances for reaching a pose. Both comparisons
/// are strict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// meters
    pub pos: f64,
    /// radians
    pub rot: f64,
}

impl Tolerance {
    pub const GRASP: Tolerance = Tolerance {
        pos: 0.02,
        rot: 0.15,
    };
    pub const KEYPOINT: Tolerance = Tolerance {
        pos: 0.03,
        rot: 0.2,
    };

    pub fn reached(&self, s: &Pose, target: &Pose) -> bool {
        s.position_error(target) < self.pos && s.orientation_error(target) < self.rot
    }
}

pub(crate) mod vec3_array {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        <[f64; 3]>::deserialize(d).map(Vec3::from)
    }
}
