//! SE(3) properties, checked against nalgebra's isometries as an
//! independent oracle.

use aumi::geometry::{
    compose, inverse, pose_distance, slerp, to_tip, Extrinsic, ExtrinsicSet, FrameId, GeometryError, Pose,
    Quaternion, Vec3,
};
use nalgebra::{Isometry3, Matrix4, Translation3, UnitQuaternion};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn oracle(p: &Pose) -> Matrix4<f64> {
    let q = p.rotation;
    let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q.w(), q.x(), q.y(), q.z()));
    Isometry3::from_parts(Translation3::from(p.translation), uq).to_homogeneous()
}

fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).abs().max()
}

fn quat() -> impl Strategy<Value = Quaternion> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 0.01)
        .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
}

prop_compose! {
    fn pose()(tx in -5.0..5.0f64, ty in -5.0..5.0f64, tz in -5.0..5.0f64, q in quat()) -> Pose {
        Pose::new(Vec3::new(tx, ty, tz), q)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn compose_matches_matrix_product(a in pose(), b in pose()) {
        let got = oracle(&compose(&a, &b));
        let want = oracle(&a) * oracle(&b);
        prop_assert!(max_abs_diff(&got, &want) < TOL);
    }

    #[test]
    fn inverse_matches_matrix_inverse(a in pose()) {
        let got = oracle(&inverse(&a));
        let want = oracle(&a).try_inverse().unwrap();
        prop_assert!(max_abs_diff(&got, &want) < TOL);
    }

    #[test]
    fn own_matrix_agrees_with_oracle(a in pose()) {
        prop_assert!(max_abs_diff(&a.to_matrix(), &oracle(&a)) < TOL);
    }

    #[test]
    fn compose_with_inverse_is_identity(a in pose()) {
        for p in [compose(&a, &inverse(&a)), compose(&inverse(&a), &a)] {
            let d = pose_distance(&p, &Pose::IDENTITY);
            prop_assert!(d.translational < TOL && d.angular < TOL);
        }
    }

    #[test]
    fn associativity(a in pose(), b in pose(), c in pose()) {
        let l = compose(&compose(&a, &b), &c);
        let r = compose(&a, &compose(&b, &c));
        let d = pose_distance(&l, &r);
        prop_assert!(d.translational < TOL && d.angular < TOL);
    }

    #[test]
    fn results_stay_canonical_unit(a in pose(), b in pose()) {
        for p in [compose(&a, &b), inverse(&a)] {
            prop_assert!(p.rotation.is_unit(1e-12));
            prop_assert!(p.rotation.w() >= 0.0);
        }
    }

    #[test]
    fn slerp_endpoints(a in quat(), b in quat()) {
        prop_assert!(slerp(&a, &b, 0.0).angle_to(&a) < TOL);
        prop_assert!(slerp(&a, &b, 1.0).angle_to(&b) < TOL);
    }

    #[test]
    fn slerp_moves_at_constant_rate(a in quat(), b in quat(), t in 0.0..1.0f64) {
        let total = a.angle_to(&b);
        let q = slerp(&a, &b, t);
        prop_assert!((a.angle_to(&q) - t * total).abs() < 1e-8);
        prop_assert!((q.angle_to(&b) - (1.0 - t) * total).abs() < 1e-8);
    }

    #[test]
    fn slerp_agrees_with_nalgebra(a in quat(), b in quat(), t in 0.0..1.0f64) {
        let ua = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(a.w(), a.x(), a.y(), a.z()));
        let mut ub = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(b.w(), b.x(), b.y(), b.z()));
        if ua.coords.dot(&ub.coords) < 0.0 {
            ub = UnitQuaternion::new_unchecked(-ub.into_inner());
        }
        prop_assume!(ua.angle_to(&ub) > 1e-6);
        let want = ua.slerp(&ub, t);
        let got = slerp(&a, &b, t);
        let wq = Quaternion::new(want.w, want.i, want.j, want.k);
        prop_assert!(got.angle_to(&wq) < 1e-8);
    }

    #[test]
    fn distance_triangle_inequality(a in pose(), b in pose(), c in pose()) {
        let ab = pose_distance(&a, &b);
        let bc = pose_distance(&b, &c);
        let ac = pose_distance(&a, &c);
        prop_assert!(ac.translational <= ab.translational + bc.translational + TOL);
        prop_assert!(ac.angular <= ab.angular + bc.angular + TOL);
        prop_assert!(ac.angular <= std::f64::consts::PI + TOL);
    }

    #[test]
    fn rotation_vector_round_trip(q in quat()) {
        let back = Quaternion::from_rotation_vector(&q.to_rotation_vector());
        prop_assert!(back.angle_to(&q) < TOL);
    }

    #[test]
    fn rotate_matches_matrix(q in quat(), x in -3.0..3.0f64, y in -3.0..3.0f64, z in -3.0..3.0f64) {
        let v = Vec3::new(x, y, z);
        prop_assert!((q.rotate(&v) - q.to_rotation_matrix() * v).norm() < TOL);
        let back = Quaternion::from_rotation_matrix(&q.to_rotation_matrix());
        prop_assert!(back.angle_to(&q) < TOL);
    }

    #[test]
    fn array_round_trip_is_bit_exact(a in pose()) {
        prop_assert_eq!(Pose::from_array(a.to_array()).to_array(), a.to_array());
    }
}

#[test]
fn tip_chain_matches_matrix_chain() {
    let controller = Pose::new(Vec3::new(0.3, -0.2, 1.1), Quaternion::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.8));
    let ext = Extrinsic::new(
        FrameId::LeftController,
        FrameId::LeftTip,
        Pose::new(Vec3::new(0.01, -0.02, 0.15), Quaternion::from_axis_angle(&Vec3::y(), 0.1)),
    );
    let tip = to_tip(&controller, &ext).unwrap();
    let want = oracle(&controller) * oracle(&ext.transform);
    assert!(max_abs_diff(&oracle(&tip), &want) < TOL);
}

#[test]
fn tip_chain_rejects_wrong_frames() {
    let ext = Extrinsic::new(FrameId::World, FrameId::LeftTip, Pose::IDENTITY);
    assert!(matches!(to_tip(&Pose::IDENTITY, &ext), Err(GeometryError::FrameMismatch { .. })));
    let a = Extrinsic::new(FrameId::LeftController, FrameId::LeftTip, Pose::from_translation(0.0, 0.0, 0.1));
    let b = Extrinsic::new(FrameId::Head, FrameId::RobotHeadCam, Pose::IDENTITY);
    assert!(matches!(a.then(&b), Err(GeometryError::FrameMismatch { .. })));
    let dup = ExtrinsicSet::new(vec![a, a]);
    assert!(matches!(dup, Err(GeometryError::DuplicateExtrinsic { .. })));
}

#[test]
fn non_finite_poses_rejected() {
    assert!(matches!(
        Pose::try_new(Vec3::new(f64::NAN, 0.0, 0.0), Quaternion::IDENTITY),
        Err(GeometryError::NonFinite)
    ));
}

#[test]
fn antipodal_quaternions_are_the_same_rotation() {
    let q = Quaternion::from_axis_angle(&Vec3::new(0.3, -0.4, 0.8), 2.5);
    let neg = Quaternion::from_raw(-q.w(), -q.x(), -q.y(), -q.z());
    assert!(q.angle_to(&neg) < TOL);
    assert_eq!(neg.canonical(), q.canonical());
}
