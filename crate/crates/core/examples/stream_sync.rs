//! Three asynchronous 90 Hz device streams, one with a dropout, aligned to
//! the host clock and resampled onto the 30 Hz frame grid.
//!
//! cargo run --example stream_sync

use aumi::calibration::CalibrationState;
use aumi::geometry::{ExtrinsicSet, Pose};
use aumi::simsource::{generate_stream, NoiseModel, ScriptedTrajectory};
use aumi::streaming::{align_clock, resample, ClockExchange, ResampleConfig, Source, SourceStreams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Handshakes with a device whose clock runs 5 s ahead, 0.4 ms each way.
    let exchanges: Vec<ClockExchange> = (0..5)
        .map(|i| {
            let send = 1_000_000 + i * 20_000;
            ClockExchange {
                send_t: send,
                device_t: send + 400 + 5_000_000,
                recv_t: send + 800 + (i % 2) * 50,
            }
        })
        .collect();
    let clock = align_clock(&exchanges)?;
    println!("clock offset {} us from {} exchanges", clock.offset, clock.confidence);

    let noise = NoiseModel {
        translational_sigma: 0.0005,
        jitter_sigma: 300.0,
        ..NoiseModel::zero(11)
    };
    let mut streams = SourceStreams::default();
    for (src, x) in [(Source::LeftController, -0.15), (Source::RightController, 0.15), (Source::Hmd, 0.0)] {
        let mut traj = ScriptedTrajectory::stationary(Pose::from_translation(x, 0.3, 0.2), 0.05, 1.0);
        if src == Source::RightController {
            // right controller loses tracking for 250 ms
            traj.tracking_lost.push((0.4, 0.65));
        }
        *streams.get_mut(src) = generate_stream(&traj, &noise, 90.0, 1.0, src)?;
    }
    let out = resample(
        &streams,
        &CalibrationState::identity(),
        &ExtrinsicSet::default(),
        &[],
        &ResampleConfig::default(),
    )?;
    for (f, age) in out.frames.iter().zip(&out.source_age) {
        println!(
            "frame {:>2} t={:>7} us valid={:03b} right age {:>6} us",
            f.index,
            f.timeline_time,
            f.validity,
            age[1].map_or("-".to_string(), |a| a.to_string())
        );
    }
    Ok(())
}
