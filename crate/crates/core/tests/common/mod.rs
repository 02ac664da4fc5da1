#![allow(dead_code)]

use aumi::calibration::{CalibrationMethod, CalibrationState};
use aumi::geometry::{Pose, Quaternion, Vec3};
use aumi::recording::{Episode, EpisodeHeader, SourceKind};
use aumi::rng::SimRng;
use aumi::streaming::{tick_time, EventCode, SyncedFrame};

pub const GOLDEN_EPISODE: &[u8] = include_bytes!("../fixtures/golden_3frame.aumi");

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// The episode stored in `golden_3frame.aumi`.
pub fn golden_episode() -> Episode {
    let mut header = EpisodeHeader::new("golden", "op0", SourceKind::ActiveUmi);
    header.created_at = 1_735_689_600_000_000;
    header.calibration = CalibrationState {
        world_from_tracking: Pose::new(Vec3::new(0.1, 0.2, 0.3), Quaternion::from_raw(0.5, 0.5, 0.5, 0.5)),
        method: CalibrationMethod::DockCalibration,
        established_at: 1000,
    };
    let at = |x: f64, y: f64, z: f64| Pose::from_translation(x, y, z);
    let frame = |k: u64, validity, y: f64, widths: (f64, f64), events: Vec<EventCode>| SyncedFrame {
        index: k,
        timeline_time: tick_time(k, 30.0),
        left_tip: at(-0.1, y, 0.0),
        right_tip: at(0.1, y, 0.0),
        head: at(0.0, 0.0, 0.5),
        left_width: widths.0,
        right_width: widths.1,
        validity,
        events,
    };
    Episode::new(
        header,
        vec![
            frame(0, 7, 0.0, (0.05, 0.04), vec![EventCode::EPISODE_START]),
            frame(1, 7, 0.01, (0.05, 0.03), vec![]),
            frame(2, 3, 0.02, (0.06, 0.02), vec![EventCode::EPISODE_STOP]),
        ],
    )
}

fn random_pose(rng: &mut SimRng) -> Pose {
    let t = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
    let q = Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian() + 1e-3);
    Pose::new(t, q)
}

/// An arbitrary well-formed episode; `max_frames` bounds its length.
pub fn random_episode(rng: &mut SimRng, max_frames: u64) -> Episode {
    let kind = if rng.below(2) == 0 { SourceKind::ActiveUmi } else { SourceKind::Teleop };
    let mut header = EpisodeHeader::new(format!("task{}", rng.below(1000)), format!("op{}", rng.below(50)), kind);
    header.rate = [30.0, 60.0, 29.97][rng.below(3) as usize];
    header.created_at = rng.next_u64() >> 12;
    header.calibration = CalibrationState {
        world_from_tracking: random_pose(rng),
        method: CalibrationMethod::from_code(rng.below(2) as u8).unwrap(),
        established_at: rng.next_u64() >> 20,
    };
    for i in 0..rng.below(4) {
        header.metadata.insert(format!("extra.{i}"), format!("v{}", rng.next_u32()));
    }
    let n = rng.below(max_frames + 1);
    let frames = (0..n)
        .map(|k| {
            let events = (0..rng.below(3)).map(|_| EventCode(1 + rng.below(4) as u8)).collect();
            SyncedFrame {
                index: k,
                timeline_time: tick_time(k, header.rate),
                left_tip: random_pose(rng),
                right_tip: random_pose(rng),
                head: random_pose(rng),
                left_width: rng.uniform() * 0.1,
                right_width: rng.uniform() * 0.1,
                validity: rng.below(8) as u8,
                events,
            }
        })
        .collect();
    Episode::new(header, frames)
}
