//! Controller pose to gripper tip, and the basic SE(3) algebra around it.
//!
//! cargo run --example pose_chain

use aumi::geometry::{compose, inverse, pose_distance, slerp, to_tip, Extrinsic, FrameId, Pose, Quaternion, Vec3};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Right controller held 40 cm in front, pitched down 30 degrees.
    let controller = Pose::new(
        Vec3::new(0.2, 0.4, 0.1),
        Quaternion::from_axis_angle(&Vec3::x(), -30f64.to_radians()),
    );
    let ext = Extrinsic::default_tip(FrameId::RightTip);
    let tip = to_tip(&controller, &ext)?;
    println!("controller {controller}");
    println!("tip        {tip}");

    // An extrinsic whose parent is not a controller cannot produce a tip.
    let wrong = Extrinsic::new(FrameId::Head, FrameId::RightTip, ext.transform);
    println!("mismatch   {}", to_tip(&controller, &wrong).unwrap_err());

    let round = compose(&inverse(&tip), &tip);
    println!("T^-1 T     {round}");

    let a = Pose::IDENTITY;
    let b = Pose::new(Vec3::new(0.1, 0.0, 0.0), Quaternion::from_axis_angle(&Vec3::z(), 1.0));
    for t in [0.0, 0.25, 0.5, 1.0] {
        let p = Pose::new(
            a.translation.lerp(&b.translation, t),
            slerp(&a.rotation, &b.rotation, t),
        );
        let d = pose_distance(&a, &p);
        println!("slerp t={t:<4} angle {:.4} rad, offset {:.4} m", d.angular, d.translational);
    }
    Ok(())
}
