//! SE(3) pose algebra.
//!
//! Convention: a [`Pose`] is a parent-from-child transform, and composition
//! reads left to right: `world_from_tip = world_from_controller ∘ controller_from_tip`.
//! Rotations are unit quaternions kept in the `w >= 0` hemisphere.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Tolerance for algebraic identities on double-precision chains.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("FrameMismatch: expected {expected}, found {found}")]
    FrameMismatch { expected: FrameId, found: FrameId },
    #[error("NonFinite: pose has non-finite components")]
    NonFinite,
    #[error("DuplicateExtrinsic: duplicate extrinsic for {parent} -> {child}")]
    DuplicateExtrinsic { parent: FrameId, child: FrameId },
    #[error("MissingExtrinsic: no extrinsic for {parent} -> {child}")]
    MissingExtrinsic { parent: FrameId, child: FrameId },
    #[error("UnknownFrame: unknown frame id {0}")]
    UnknownFrame(u8),
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizing, canonicalizing constructor.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }.normalized()
    }

    /// Takes the components verbatim. Decoders use this so that files and
    /// messages round-trip bit-exactly; check [`Quaternion::is_unit`] before
    /// trusting the result.
    pub const fn from_raw(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let a = axis / n;
        Self::new(c, a.x * s, a.y * s, a.z * s)
    }

    /// Exponential map from a rotation vector (axis * angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let theta = v.norm();
        if theta < 1e-12 {
            return Self::new(1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z);
        }
        Self::from_axis_angle(v, theta)
    }

    /// Logarithm map; the returned vector has norm in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = self.canonical();
        let v = Vec3::new(q.x, q.y, q.z);
        let s = v.norm();
        if s < 1e-12 {
            return 2.0 * v;
        }
        let theta = 2.0 * s.atan2(q.w);
        v * (theta / s)
    }

    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let r = nalgebra::Rotation3::from_matrix_unchecked(*m);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&r);
        Self::new(q.w, q.i, q.j, q.k)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// `[w, x, y, z]`
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Sign-flipped into the `w >= 0` hemisphere.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            Quaternion {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            *self
        }
    }

    /// Rescales to unit norm and canonicalizes. Quaternions already unit to
    /// within one ulp are left untouched so repeated normalization is stable.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        let q = if (n - 1.0).abs() > f64::EPSILON && n > 0.0 {
            Quaternion {
                w: self.w / n,
                x: self.x / n,
                y: self.y / n,
                z: self.z / n,
            }
        } else if n == 0.0 {
            Self::IDENTITY
        } else {
            *self
        };
        q.canonical()
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product without renormalization.
    fn hamilton(&self, o: &Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        self.hamilton(o).normalized()
    }

    pub fn inverse(&self) -> Quaternion {
        self.conjugate().normalized()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(&uv);
        v + (uv * self.w + uuv) * 2.0
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Geodesic angle between two orientations, in `[0, π]`.
    pub fn angle_to(&self, o: &Quaternion) -> f64 {
        let d = self.conjugate().hamilton(o);
        let v = (d.x * d.x + d.y * d.y + d.z * d.z).sqrt();
        2.0 * v.atan2(d.w.abs())
    }

    /// Spherical linear interpolation along the shorter arc.
    pub fn slerp(&self, other: &Quaternion, t: f64) -> Quaternion {
        let t = t.clamp(0.0, 1.0);
        if t == 0.0 {
            return self.canonical();
        }
        if t == 1.0 {
            return other.canonical();
        }
        let mut q1 = *other;
        let mut d = self.dot(&q1);
        if d < 0.0 {
            q1 = Quaternion {
                w: -q1.w,
                x: -q1.x,
                y: -q1.y,
                z: -q1.z,
            };
            d = -d;
        }
        let (a, b) = if d > 1.0 - 1e-12 {
            (1.0 - t, t)
        } else {
            let theta = d.min(1.0).acos();
            let s = theta.sin();
            (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
        };
        Quaternion {
            w: a * self.w + b * q1.w,
            x: a * self.x + b * q1.x,
            y: a * self.y + b * q1.y,
            z: a * self.z + b * q1.z,
        }
        .normalized()
    }

    /// Roll, pitch, yaw (ZYX convention), for display only.
    pub fn to_roll_pitch_yaw(&self) -> (f64, f64, f64) {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        (roll, pitch, yaw)
    }
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Rigid transform: translation in meters plus orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Quaternion,
}

impl Default for Pose {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        translation: Vector3::new(0.0, 0.0, 0.0),
        rotation: Quaternion::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: Quaternion) -> Self {
        Pose {
            translation,
            rotation: rotation.normalized(),
        }
    }

    pub fn try_new(translation: Vec3, rotation: Quaternion) -> Result<Self, GeometryError> {
        if !translation.iter().all(|c| c.is_finite()) || !rotation.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        Ok(Self::new(translation, rotation))
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose {
            translation: Vec3::new(x, y, z),
            rotation: Quaternion::IDENTITY,
        }
    }

    pub fn from_rotation(rotation: Quaternion) -> Self {
        Pose::new(Vec3::zeros(), rotation)
    }

    /// Layout used on the wire and on disk: `tx ty tz qw qx qy qz`.
    pub fn to_array(&self) -> [f64; 7] {
        let t = &self.translation;
        let q = &self.rotation;
        [t.x, t.y, t.z, q.w, q.x, q.y, q.z]
    }

    /// Inverse of [`Pose::to_array`]; components are taken verbatim.
    pub fn from_array(a: [f64; 7]) -> Self {
        Pose {
            translation: Vec3::new(a[0], a[1], a[2]),
            rotation: Quaternion::from_raw(a[3], a[4], a[5], a[6]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|c| c.is_finite()) && self.rotation.is_finite()
    }

    pub fn compose(&self, b: &Pose) -> Pose {
        compose(self, b)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    /// 4x4 homogeneous matrix.
    pub fn to_matrix(&self) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&self.rotation.to_rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        let (r, p, y) = self.rotation.to_roll_pitch_yaw();
        write!(
            f,
            "t=({:.6}, {:.6}, {:.6}) m rpy=({:.3}, {:.3}, {:.3}) deg",
            t.x,
            t.y,
            t.z,
            r.to_degrees(),
            p.to_degrees(),
            y.to_degrees()
        )
    }
}

/// `a ∘ b`: apply `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        translation: a.translation + a.rotation.rotate(&b.translation),
        rotation: a.rotation.mul(&b.rotation),
    }
}

pub fn inverse(p: &Pose) -> Pose {
    let r = p.rotation.inverse();
    Pose {
        translation: -r.rotate(&p.translation),
        rotation: r,
    }
}

pub fn slerp(q0: &Quaternion, q1: &Quaternion, t: f64) -> Quaternion {
    q0.slerp(q1, t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDistance {
    /// meters
    pub translational: f64,
    /// radians, in `[0, π]`
    pub angular: f64,
}

pub fn pose_distance(a: &Pose, b: &Pose) -> PoseDistance {
    PoseDistance {
        translational: (a.translation - b.translation).norm(),
        angular: a.rotation.angle_to(&b.rotation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameId {
    TrackingOrigin = 0,
    World = 1,
    LeftController = 2,
    RightController = 3,
    LeftTip = 4,
    RightTip = 5,
    Head = 6,
    RobotBase = 7,
    RobotLeftEE = 8,
    RobotRightEE = 9,
    RobotHeadCam = 10,
}

impl FrameId {
    pub const ALL: [FrameId; 11] = [
        FrameId::TrackingOrigin,
        FrameId::World,
        FrameId::LeftController,
        FrameId::RightController,
        FrameId::LeftTip,
        FrameId::RightTip,
        FrameId::Head,
        FrameId::RobotBase,
        FrameId::RobotLeftEE,
        FrameId::RobotRightEE,
        FrameId::RobotHeadCam,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, GeometryError> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(GeometryError::UnknownFrame(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameId::TrackingOrigin => "tracking_origin",
            FrameId::World => "world",
            FrameId::LeftController => "left_controller",
            FrameId::RightController => "right_controller",
            FrameId::LeftTip => "left_tip",
            FrameId::RightTip => "right_tip",
            FrameId::Head => "head",
            FrameId::RobotBase => "robot_base",
            FrameId::RobotLeftEE => "robot_left_ee",
            FrameId::RobotRightEE => "robot_right_ee",
            FrameId::RobotHeadCam => "robot_head_cam",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// The controller a tip frame is rigidly attached to.
    pub fn controller_of_tip(self) -> Option<FrameId> {
        match self {
            FrameId::LeftTip => Some(FrameId::LeftController),
            FrameId::RightTip => Some(FrameId::RightController),
            _ => None,
        }
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed transform between two rigidly attached frames (`parent_from_child`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsic {
    pub parent: FrameId,
    pub child: FrameId,
    pub transform: Pose,
}

impl Extrinsic {
    pub fn new(parent: FrameId, child: FrameId, transform: Pose) -> Self {
        Extrinsic {
            parent,
            child,
            transform,
        }
    }

    /// Placeholder controller-to-tip offset: 0.15 m along controller z.
    pub fn default_tip(side: FrameId) -> Self {
        let parent = side.controller_of_tip().expect("tip frame");
        Extrinsic::new(parent, side, Pose::from_translation(0.0, 0.0, 0.15))
    }

    /// `self ∘ next`, only when `self.child == next.parent`.
    pub fn then(&self, next: &Extrinsic) -> Result<Extrinsic, GeometryError> {
        if self.child != next.parent {
            return Err(GeometryError::FrameMismatch {
                expected: self.child,
                found: next.parent,
            });
        }
        Ok(Extrinsic::new(
            self.parent,
            next.child,
            compose(&self.transform, &next.transform),
        ))
    }
}

/// Maps a controller body pose to its gripper-tip pose.
pub fn to_tip(controller_pose: &Pose, extrinsic: &Extrinsic) -> Result<Pose, GeometryError> {
    let expected = match extrinsic.child.controller_of_tip() {
        Some(c) => c,
        None => {
            return Err(GeometryError::FrameMismatch {
                expected: FrameId::LeftTip,
                found: extrinsic.child,
            })
        }
    };
    if extrinsic.parent != expected {
        return Err(GeometryError::FrameMismatch {
            expected,
            found: extrinsic.parent,
        });
    }
    Ok(compose(controller_pose, &extrinsic.transform))
}

/// Immutable set of extrinsics, at most one per `(parent, child)` edge.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicSet {
    items: Vec<Extrinsic>,
}

impl ExtrinsicSet {
    pub fn new(items: Vec<Extrinsic>) -> Result<Self, GeometryError> {
        for (i, a) in items.iter().enumerate() {
            if items[..i]
                .iter()
                .any(|b| b.parent == a.parent && b.child == a.child)
            {
                return Err(GeometryError::DuplicateExtrinsic {
                    parent: a.parent,
                    child: a.child,
                });
            }
            if !a.transform.is_finite() {
                return Err(GeometryError::NonFinite);
            }
        }
        Ok(ExtrinsicSet { items })
    }

    pub fn get(&self, parent: FrameId, child: FrameId) -> Result<&Extrinsic, GeometryError> {
        self.items
            .iter()
            .find(|e| e.parent == parent && e.child == child)
            .ok_or(GeometryError::MissingExtrinsic { parent, child })
    }

    pub fn tip(&self, tip: FrameId) -> Result<&Extrinsic, GeometryError> {
        let parent = tip.controller_of_tip().ok_or(GeometryError::FrameMismatch {
            expected: FrameId::LeftTip,
            found: tip,
        })?;
        self.get(parent, tip)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Extrinsic> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl Default for ExtrinsicSet {
    fn default() -> Self {
        ExtrinsicSet {
            items: vec![
                Extrinsic::default_tip(FrameId::LeftTip),
                Extrinsic::default_tip(FrameId::RightTip),
            ],
        }
    }
}
