//! World-frame calibration: zero-point reset, placeholder docking and the
//! haptic proximity predicate.
//!
//! The tracking frame is taken as z-up; a gravity-aligned world frame keeps
//! its z axis parallel to tracking z.

use std::sync::RwLock;

use nalgebra::{Matrix3, Matrix6, Vector6};
use thiserror::Error;

use crate::geometry::{compose, inverse, pose_distance, Pose, Quaternion, Vec3};
use crate::Micros;

/// Relative-pose seating tolerance for docking, meters.
pub const DOCK_MAX_TRANSLATION: f64 = 0.005;
/// Relative-pose seating tolerance for docking, radians (2°).
pub const DOCK_MAX_ANGLE: f64 = 2.0 * std::f64::consts::PI / 180.0;

const GAUSS_NEWTON_MAX_STEPS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error(
        "DockMismatch: controllers not seated (relative pose off by {translational:.4} m, {angular:.4} rad)"
    )]
    DockMismatch { translational: f64, angular: f64 },
    #[error("NonMonotonicCalibration: new state at {new} us precedes current state at {current} us")]
    NonMonotonic { current: Micros, new: Micros },
    #[error("InvalidHapticRadius: {0}")]
    InvalidHapticRadius(f64),
    #[error("NonFinitePose")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CalibrationMethod {
    ZeroPointReset = 0,
    DockCalibration = 1,
}

impl CalibrationMethod {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Self::ZeroPointReset),
            1 => Some(Self::DockCalibration),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ZeroPointReset => "zero_point_reset",
            Self::DockCalibration => "dock_calibration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationState {
    pub world_from_tracking: Pose,
    pub method: CalibrationMethod,
    pub established_at: Micros,
}

impl CalibrationState {
    pub fn identity() -> Self {
        CalibrationState {
            world_from_tracking: Pose::IDENTITY,
            method: CalibrationMethod::ZeroPointReset,
            established_at: 0,
        }
    }

    pub fn apply(&self, raw: &Pose) -> Pose {
        apply_calibration(raw, self)
    }
}

/// How the orientation of a new zero-point frame is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResetMode {
    /// Heading follows the controller, roll and pitch are zeroed.
    #[default]
    GravityAligned,
    /// World frame takes the tip's full orientation.
    FullOrientation,
}

/// Known dock poses of both tips in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaceholderSpec {
    pub left_dock_in_world: Pose,
    pub right_dock_in_world: Pose,
}

impl PlaceholderSpec {
    /// `left_from_right` for the seated controllers.
    pub fn relative(&self) -> Pose {
        compose(&inverse(&self.left_dock_in_world), &self.right_dock_in_world)
    }
}

impl Default for PlaceholderSpec {
    /// Docks 0.2 m apart along world x, both with identity orientation.
    fn default() -> Self {
        PlaceholderSpec {
            left_dock_in_world: Pose::from_translation(-0.1, 0.0, 0.0),
            right_dock_in_world: Pose::from_translation(0.1, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticZoneConfig {
    /// meters
    pub radius: f64,
    /// Hz; carried as metadata only
    pub pulse_frequency_hint: f64,
}

impl HapticZoneConfig {
    pub fn new(radius: f64, pulse_frequency_hint: f64) -> Result<Self, CalibrationError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(CalibrationError::InvalidHapticRadius(radius));
        }
        Ok(HapticZoneConfig {
            radius,
            pulse_frequency_hint,
        })
    }
}

impl Default for HapticZoneConfig {
    fn default() -> Self {
        HapticZoneConfig {
            radius: 0.03,
            pulse_frequency_hint: 160.0,
        }
    }
}

/// Heading of a rotation about tracking z, read off the projection of its
/// x axis (or y axis when x points straight up or down).
pub fn heading(q: &Quaternion) -> f64 {
    let x = q.rotate(&Vec3::x());
    if x.x.hypot(x.y) > 1e-9 {
        x.y.atan2(x.x)
    } else {
        let y = q.rotate(&Vec3::y());
        (-y.x).atan2(y.y)
    }
}

/// Zero-point reset with the default gravity-aligned orientation.
pub fn reset_zero_point(current_tip_pose_in_tracking: &Pose, event_time: Micros) -> CalibrationState {
    reset_zero_point_with(current_tip_pose_in_tracking, event_time, ResetMode::default())
}

pub fn reset_zero_point_with(
    tip: &Pose,
    event_time: Micros,
    mode: ResetMode,
) -> CalibrationState {
    let world_in_tracking = match mode {
        ResetMode::FullOrientation => *tip,
        ResetMode::GravityAligned => Pose::new(
            tip.translation,
            Quaternion::from_axis_angle(&Vec3::z(), heading(&tip.rotation)),
        ),
    };
    CalibrationState {
        world_from_tracking: inverse(&world_in_tracking),
        method: CalibrationMethod::ZeroPointReset,
        established_at: event_time,
    }
}

pub fn apply_calibration(raw: &Pose, state: &CalibrationState) -> Pose {
    compose(&state.world_from_tracking, raw)
}

/// Per-dock residual of a calibration: (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DockResiduals {
    pub left: (f64, f64),
    pub right: (f64, f64),
}

impl DockResiduals {
    /// Sum of squared residuals, 1 rad weighted as 1 m.
    pub fn cost(&self) -> f64 {
        let sq = |(a, b): (f64, f64)| a * a + b * b;
        sq(self.left) + sq(self.right)
    }
}

pub fn dock_residuals(
    world_from_tracking: &Pose,
    left_raw: &Pose,
    right_raw: &Pose,
    spec: &PlaceholderSpec,
) -> DockResiduals {
    let l = pose_distance(&compose(world_from_tracking, left_raw), &spec.left_dock_in_world);
    let r = pose_distance(&compose(world_from_tracking, right_raw), &spec.right_dock_in_world);
    DockResiduals {
        left: (l.translational, l.angular),
        right: (r.translational, r.angular),
    }
}

/// Seating check only: the raw tips' relative pose against the dock's.
pub fn check_seating(
    left_raw: &Pose,
    right_raw: &Pose,
    spec: &PlaceholderSpec,
) -> Result<(), CalibrationError> {
    if !left_raw.is_finite() || !right_raw.is_finite() {
        return Err(CalibrationError::NonFinite);
    }
    let raw_rel = compose(&inverse(left_raw), right_raw);
    let d = pose_distance(&raw_rel, &spec.relative());
    if d.translational > DOCK_MAX_TRANSLATION || d.angular > DOCK_MAX_ANGLE {
        return Err(CalibrationError::DockMismatch {
            translational: d.translational,
            angular: d.angular,
        });
    }
    Ok(())
}

/// Solves for `world_from_tracking` from the two docked tip poses.
///
/// Closed-form start (mean of the two rotation hypotheses, then the
/// translation that centers the residuals), polished with Gauss-Newton on
/// the joint translational + geodesic cost.
pub fn dock_calibrate(
    left_raw: &Pose,
    right_raw: &Pose,
    spec: &PlaceholderSpec,
    event_time: Micros,
) -> Result<CalibrationState, CalibrationError> {
    check_seating(left_raw, right_raw, spec)?;
    let pairs = [
        (left_raw, &spec.left_dock_in_world),
        (right_raw, &spec.right_dock_in_world),
    ];

    let hyp: Vec<Quaternion> = pairs
        .iter()
        .map(|(raw, dock)| dock.rotation.mul(&raw.rotation.inverse()))
        .collect();
    let mut b = hyp[1];
    if hyp[0].dot(&b) < 0.0 {
        b = Quaternion::from_raw(-b.w(), -b.x(), -b.y(), -b.z());
    }
    let mut rot = Quaternion::new(
        hyp[0].w() + b.w(),
        hyp[0].x() + b.x(),
        hyp[0].y() + b.y(),
        hyp[0].z() + b.z(),
    );
    let mut trans = pairs
        .iter()
        .map(|(raw, dock)| dock.translation - rot.rotate(&raw.translation))
        .sum::<Vec3>()
        / 2.0;

    for _ in 0..GAUSS_NEWTON_MAX_STEPS {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for (raw, dock) in &pairs {
            let p = rot.rotate(&raw.translation);
            let rt = p + trans - dock.translation;
            // d/d(omega) of exp(omega) * p = -[p]x ; d/dv = I
            let mut jt = nalgebra::Matrix3x6::<f64>::zeros();
            jt.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-p.cross_matrix()));
            jt.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            h += jt.transpose() * jt;
            g += jt.transpose() * rt;

            let err = rot.mul(&raw.rotation).mul(&dock.rotation.inverse());
            let phi = err.to_rotation_vector();
            let mut jr = nalgebra::Matrix3x6::<f64>::zeros();
            jr.fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&left_jacobian_inverse(&phi));
            h += jr.transpose() * jr;
            g += jr.transpose() * phi;
        }
        let Some(chol) = h.cholesky() else { break };
        let step = -chol.solve(&g);
        let omega = Vec3::new(step[0], step[1], step[2]);
        let v = Vec3::new(step[3], step[4], step[5]);
        rot = Quaternion::from_rotation_vector(&omega).mul(&rot);
        trans += v;
        if step.norm() < 1e-15 {
            break;
        }
    }

    Ok(CalibrationState {
        world_from_tracking: Pose::new(trans, rot),
        method: CalibrationMethod::DockCalibration,
        established_at: event_time,
    })
}

/// Inverse of the SO(3) left Jacobian at `phi`.
fn left_jacobian_inverse(phi: &Vec3) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = phi.cross_matrix();
    let i = Matrix3::identity();
    if theta < 1e-8 {
        return i - 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let coef = 1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    i - 0.5 * k + coef * k * k
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticStatus {
    pub active: bool,
    /// meters from the world origin
    pub distance: f64,
}

/// Vibration predicate: strictly inside the zone radius.
pub fn haptic_status(tip_in_world: &Pose, cfg: &HapticZoneConfig) -> HapticStatus {
    let distance = pose_distance(tip_in_world, &Pose::IDENTITY).translational;
    HapticStatus {
        active: distance < cfg.radius,
        distance,
    }
}

/// Current calibration for a session: one writer installs states, any number
/// of readers take snapshots.
#[derive(Debug, Default)]
pub struct CalibrationSession {
    current: RwLock<Option<CalibrationState>>,
}

impl CalibrationSession {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn install(&self, state: CalibrationState) -> Result<(), CalibrationError> {
        let mut slot = self.current.write().expect("calibration lock poisoned");
        if let Some(cur) = slot.as_ref() {
            if state.established_at < cur.established_at {
                return Err(CalibrationError::NonMonotonic {
                    current: cur.established_at,
                    new: state.established_at,
                });
            }
        }
        *slot = Some(state);
        Ok(())
    }

    pub fn snapshot(&self) -> Option<CalibrationState> {
        *self.current.read().expect("calibration lock poisoned")
    }
}
