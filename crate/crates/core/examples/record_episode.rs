//! Write an episode file, read it back, validate it, and show the TSV dump
//! shared with other readers.
//!
//! cargo run --example record_episode

use aumi::calibration::CalibrationState;
use aumi::geometry::{Pose, Vec3};
use aumi::recording::{dump_tsv, read_episode, validate_episode, Episode, EpisodeHeader, SourceKind, ValidationLimits};
use aumi::streaming::{tick_time, EventCode, SyncedFrame, ALL_VALID};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let frames: Vec<SyncedFrame> = (0..30u64)
        .map(|k| SyncedFrame {
            index: k,
            timeline_time: tick_time(k, 30.0),
            left_tip: Pose::from_translation(-0.1, 0.3, 0.01 * k as f64),
            right_tip: Pose::from_translation(0.1, 0.3, 0.0),
            head: Pose::new(Vec3::new(0.0, -0.3, 0.45), Default::default()),
            left_width: 0.08 - 0.002 * k as f64,
            right_width: 0.05,
            validity: ALL_VALID,
            events: if k == 0 { vec![EventCode::EPISODE_START] } else { vec![] },
        })
        .collect();
    let mut header = EpisodeHeader::new("pick_cup", "op07", SourceKind::ActiveUmi);
    header.calibration = CalibrationState::identity();
    header.created_at = 1_735_689_600_000_000;
    let ep = Episode::new(header, frames);

    let bytes = ep.to_bytes()?;
    println!("{} bytes for {} frames", bytes.len(), ep.frames.len());
    let back = read_episode(&bytes)?;
    assert_eq!(back.to_bytes()?, bytes);
    println!("round trip is byte-identical");

    let mut broken = bytes.clone();
    broken[bytes.len() / 2] ^= 0x40;
    println!("flipped byte: {}", read_episode(&broken).unwrap_err());

    let diags = validate_episode(&back, &ValidationLimits::default());
    println!("{} diagnostics", diags.len());
    for line in dump_tsv(&back)?.lines().take(8) {
        println!("  {line}");
    }
    Ok(())
}
