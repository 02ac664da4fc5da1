//! The three calibration procedures: B-button zero point, placeholder dock,
//! and the haptic zone around the origin.
//!
//! cargo run --example zero_point_and_dock

use aumi::calibration::{
    apply_calibration, dock_calibrate, haptic_status, reset_zero_point, HapticZoneConfig, PlaceholderSpec,
};
use aumi::geometry::{compose, pose_distance, Pose, Quaternion, Vec3};
use aumi::simsource::{simulate_dock, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Operator presses B with the left tip somewhere in the tracking volume,
    // slightly tilted. The new world keeps gravity and takes the tip's heading.
    let tip = Pose::new(
        Vec3::new(1.2, -0.4, 0.9),
        Quaternion::from_axis_angle(&Vec3::z(), 0.7).mul(&Quaternion::from_axis_angle(&Vec3::x(), 0.05)),
    );
    let zp = reset_zero_point(&tip, 1_000);
    println!("zero point: world_from_tracking {}", zp.world_from_tracking);
    println!("  pressing tip in world {}", apply_calibration(&tip, &zp));

    // Dock: both tips sit in the placeholder, whose geometry is known.
    let spec = PlaceholderSpec::default();
    let truth = Pose::new(Vec3::new(-0.3, 2.0, -1.1), Quaternion::from_axis_angle(&Vec3::new(0.2, 0.1, 1.0), 2.2));
    for sigma in [0.0, 0.001] {
        let noise = NoiseModel {
            translational_sigma: sigma,
            ..NoiseModel::zero(7)
        };
        let (l, r) = simulate_dock(&spec, &truth, &noise);
        let st = dock_calibrate(&l, &r, &spec, 2_000)?;
        let err = pose_distance(&st.world_from_tracking, &truth);
        println!(
            "dock sigma={sigma}: error {:.3e} m, {:.3e} rad",
            err.translational, err.angular
        );
    }

    // A controller not pushed fully home: right tip 10 mm off.
    let (l, r) = simulate_dock(&spec, &truth, &NoiseModel::zero(0));
    let off = compose(&r, &Pose::from_translation(0.01, 0.0, 0.0));
    println!("badly seated: {}", dock_calibrate(&l, &off, &spec, 3_000).unwrap_err());

    let zone = HapticZoneConfig::default();
    for x in [0.0299, 0.03, 0.0301] {
        let s = haptic_status(&Pose::from_translation(x, 0.0, 0.0), &zone);
        println!("haptic at {x} m: active={}", s.active);
    }
    Ok(())
}
