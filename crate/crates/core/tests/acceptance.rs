//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use aumi::calibration::{
    dock_calibrate, haptic_status, CalibrationError, CalibrationState, HapticZoneConfig, PlaceholderSpec,
};
use aumi::geometry::{compose, inverse, pose_distance, slerp, ExtrinsicSet, Pose, Quaternion, Vec3};
use aumi::recording::{build_mix_manifest, read_episode, ManifestEntry, RecordingError, SourceKind};
use aumi::replay_eval::{
    compute_rpe, slowdown_report, tape_measure_nominals, tape_measure_protocol, BiasReplayer, CollectionMethod,
    IdentityReplayer, NoiseReplayer, ProtocolOptions, RpeTrial, ThroughputRecord,
};
use aumi::rng::SimRng;
use aumi::simsource::{generate_stream, simulate_dock, simulate_tape_measure, NoiseModel, ScriptedTrajectory};
use aumi::streaming::{
    decode_message, decode_prefix, encode_message, resample, tick_time, ProtocolMessage, ResampleConfig, Source,
    SourceStreams, StreamSample,
};
use common::{golden_episode, random_episode, GOLDEN_EPISODE};

/// Monte Carlo reference for the noisy tape-measure protocol: mean and
/// sample standard deviation of the ten-trial mean RPE (percent) over
/// 100 000 draws, each tip offset by an independent N(0, 2 mm) per axis.
/// Produced with numpy, independently of this crate.
const MC_MEAN: f64 = 0.661_710_604_7;
const MC_SD: f64 = 0.211_980_891_5;
const MC_SAMPLES: f64 = 100_000.0;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!("{} [{:.2} s]", o.detail, took.as_secs_f64());
    if let Some(l) = limit {
        if took >= l {
            o.ok = false;
            o.detail = format!("{} exceeds {:.0} s", o.detail, l.as_secs_f64());
        }
    }
    o
}

fn random_pose(rng: &mut SimRng, spread: f64) -> Pose {
    let t = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * spread;
    let q = Quaternion::new(rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian() + 1e-3);
    Pose::new(t, q)
}

fn rpe_exactness() -> Outcome {
    timed(Some(Duration::from_secs(1)), || {
        let r = compute_rpe(&RpeTrial::new(1.00, 1.01).unwrap());
        let rel = (r.rpe - 1.0).abs() / 1.0;
        let mut rng = SimRng::new(1, 0);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let n = 0.01 + rng.uniform() * 2.0;
            let l = n * (0.5 + rng.uniform());
            let got = compute_rpe(&RpeTrial::new(n, l).unwrap());
            let literal = (l - n).abs() / n * 100.0;
            worst = worst.max((got.rpe - literal).abs() / literal.max(f64::MIN_POSITIVE));
            worst = worst.max((got.delta_l - (l - n).abs()).abs());
        }
        outcome(
            rel <= 1e-12 && worst <= 1e-12,
            format!("RPE(1.00, 1.01) = {:.15}%, 10^4 trials worst rel dev {worst:.1e}", r.rpe),
        )
    })
}

fn tape_zero_law() -> Outcome {
    timed(Some(Duration::from_secs(5)), || {
        let eps = simulate_tape_measure(&tape_measure_nominals(), &NoiseModel::zero(0)).unwrap();
        let report = tape_measure_protocol(&eps, &mut IdentityReplayer, &ProtocolOptions::default()).unwrap();
        outcome(
            report.mean_rpe == 0.0 && report.trials.len() == 10,
            format!("{} trials, mean RPE {}%", report.trials.len(), report.mean_rpe),
        )
    })
}

fn bias_closed_form() -> Outcome {
    timed(None, || {
        let eps = simulate_tape_measure(&tape_measure_nominals(), &NoiseModel::zero(0)).unwrap();
        let report =
            tape_measure_protocol(&eps, &mut BiasReplayer { bias: 0.005 }, &ProtocolOptions::default()).unwrap();
        let mut worst = 0.0f64;
        for t in &report.trials {
            let nominal_cm = t.nominal * 100.0;
            worst = worst.max((t.rpe - 0.5 / nominal_cm * 100.0).abs());
        }
        // trials run longest first, so RPE must rise along the list
        let decreasing = report.trials.windows(2).all(|w| w[0].nominal > w[1].nominal && w[0].rpe < w[1].rpe);
        outcome(
            worst <= 1e-9 && decreasing && report.trials.len() == 10,
            format!("worst |RPE - 0.5/cm*100| = {worst:.1e}, strictly decreasing in distance: {decreasing}"),
        )
    })
}

fn noise_oracle() -> Outcome {
    timed(Some(Duration::from_secs(30)), || {
        let eps = simulate_tape_measure(&tape_measure_nominals(), &NoiseModel::zero(0)).unwrap();
        let opts = ProtocolOptions::default();
        let runs = 2000;
        let means: Vec<f64> = (0..runs)
            .map(|seed| {
                let mut r = NoiseReplayer::new(0.002, seed);
                tape_measure_protocol(&eps, &mut r, &opts).unwrap().mean_rpe
            })
            .collect();
        let m = means.iter().sum::<f64>() / runs as f64;
        let sd = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
        let se = (sd * sd / runs as f64 + MC_SD * MC_SD / MC_SAMPLES).sqrt();
        let z = (m - MC_MEAN) / se;
        outcome(
            z.abs() < 3.0,
            format!("pipeline {m:.4}% over {runs} seeds vs oracle {MC_MEAN:.4}%, {z:+.2} SE"),
        )
    })
}

fn calibration_recovery() -> Outcome {
    timed(None, || {
        let mut rng = SimRng::new(2, 0);
        let spec = PlaceholderSpec::default();
        let (mut worst_t, mut worst_a, mut recovered) = (0.0f64, 0.0f64, 0);
        for i in 0..1000 {
            let truth = random_pose(&mut rng, 3.0);
            let (l, r) = simulate_dock(&spec, &truth, &NoiseModel::zero(i));
            if let Ok(s) = dock_calibrate(&l, &r, &spec, 0) {
                let d = pose_distance(&s.world_from_tracking, &truth);
                worst_t = worst_t.max(d.translational);
                worst_a = worst_a.max(d.angular);
                if d.translational <= 1e-9 && d.angular <= 1e-9 {
                    recovered += 1;
                }
            }
        }
        let mut refused = 0;
        for i in 0..100 {
            let truth = random_pose(&mut rng, 3.0);
            let (l, mut r) = simulate_dock(&spec, &truth, &NoiseModel::zero(i));
            r.translation += rng.unit_vector() * 0.010;
            if matches!(dock_calibrate(&l, &r, &spec, 0), Err(CalibrationError::DockMismatch { .. })) {
                refused += 1;
            }
        }
        outcome(
            recovered == 1000 && refused == 100,
            format!(
                "recovered {recovered}/1000 (worst {worst_t:.1e} m, {worst_a:.1e} rad), +10 mm refused {refused}/100"
            ),
        )
    })
}

fn haptic_threshold() -> Outcome {
    let cfg = HapticZoneConfig::new(0.03, 160.0).unwrap();
    let states: Vec<bool> = [0.0299, 0.0300, 0.0301]
        .iter()
        .map(|&d| haptic_status(&Pose::from_translation(0.0, d, 0.0), &cfg).active)
        .collect();
    outcome(states == [true, false, false], format!("0.0299/0.0300/0.0301 m active = {states:?}"))
}

fn se3_suite() -> Outcome {
    timed(Some(Duration::from_secs(2)), || {
        let mut rng = SimRng::new(3, 0);
        let poses: Vec<Pose> = (0..10_000).map(|_| random_pose(&mut rng, 5.0)).collect();
        let mut worst = 0.0f64;
        let err = |d: aumi::geometry::PoseDistance| d.translational.max(d.angular);
        let mut triangle_ok = true;
        for (i, a) in poses.iter().enumerate() {
            let b = &poses[(i * 7 + 1) % poses.len()];
            let c = &poses[(i * 13 + 5) % poses.len()];
            worst = worst.max(err(pose_distance(&compose(a, &inverse(a)), &Pose::IDENTITY)));
            worst = worst.max(err(pose_distance(&compose(&inverse(a), a), &Pose::IDENTITY)));
            worst = worst.max(err(pose_distance(&compose(&compose(a, b), c), &compose(a, &compose(b, c)))));
            let q0 = slerp(&a.rotation, &b.rotation, 0.0);
            let q1 = slerp(&a.rotation, &b.rotation, 1.0);
            worst = worst.max(q0.angle_to(&a.rotation)).max(q1.angle_to(&b.rotation));
            let (ab, bc, ac) = (pose_distance(a, b), pose_distance(b, c), pose_distance(a, c));
            triangle_ok &= ac.translational <= ab.translational + bc.translational + 1e-9;
            triangle_ok &= ac.angular <= ab.angular + bc.angular + 1e-9;
        }
        outcome(
            worst <= 1e-9 && triangle_ok,
            format!("10^4 poses, worst identity/associativity/endpoint error {worst:.1e}, triangle holds: {triangle_ok}"),
        )
    })
}

fn fuzz_input(rng: &mut SimRng, valid: &[Vec<u8>]) -> Vec<u8> {
    match rng.below(4) {
        0 => (0..rng.below(120)).map(|_| rng.next_u32() as u8).collect(),
        1 => {
            let mut b = vec![0xA5, 0x55, rng.below(9) as u8];
            let len = if rng.below(2) == 0 { rng.below(100) as u32 } else { rng.next_u32() };
            b.extend_from_slice(&len.to_le_bytes());
            b.extend((0..rng.below(100)).map(|_| rng.next_u32() as u8));
            b
        }
        _ => {
            let mut b = valid[rng.below(valid.len() as u64) as usize].clone();
            for _ in 0..1 + rng.below(4) {
                let i = rng.below(b.len() as u64) as usize;
                b[i] = rng.next_u32() as u8;
            }
            match rng.below(3) {
                0 => b.truncate(rng.below(b.len() as u64 + 1) as usize),
                1 => b.extend((0..rng.below(16)).map(|_| rng.next_u32() as u8)),
                _ => {}
            }
            b
        }
    }
}

fn resample_fixture() -> Vec<u8> {
    let traj = ScriptedTrajectory::stationary(Pose::from_translation(0.1, 0.2, 0.3), 0.04, 4.0);
    let noise = NoiseModel {
        translational_sigma: 0.003,
        rotational_sigma: 0.02,
        jitter_sigma: 1500.0,
        latency: 2000,
        ..NoiseModel::zero(99)
    };
    let mut streams = SourceStreams::default();
    for src in Source::ALL {
        *streams.get_mut(src) = generate_stream(&traj, &noise, 90.0, 4.0, src).unwrap();
    }
    let frames = resample(
        &streams,
        &CalibrationState::identity(),
        &ExtrinsicSet::default(),
        &[],
        &ResampleConfig::default(),
    )
    .unwrap()
    .frames;
    let ep = aumi::recording::Episode::new(
        aumi::recording::EpisodeHeader::new("det", "sim", SourceKind::ActiveUmi),
        frames,
    );
    ep.to_bytes().unwrap()
}

fn streaming_determinism_and_totality() -> Outcome {
    timed(None, || {
        let a = resample_fixture();
        let b = resample_fixture();
        let identical = a == b;

        let mut rng = SimRng::new(4, 0);
        let mut valid_rng = SimRng::new(5, 0);
        let valid: Vec<Vec<u8>> = (0..64)
            .map(|i| {
                let msg = match i % 4 {
                    0 => ProtocolMessage::Bye,
                    1 => ProtocolMessage::Hello {
                        proto_version: 1,
                        source: Source::Hmd,
                        descriptor: "head".into(),
                    },
                    2 => ProtocolMessage::Event {
                        code: aumi::streaming::EventCode(i as u8),
                        device_time: valid_rng.next_u64(),
                    },
                    _ => ProtocolMessage::Sample(StreamSample {
                        source: Source::LeftController,
                        seq: i,
                        device_time: valid_rng.next_u64(),
                        pose: random_pose(&mut valid_rng, 1.0),
                        gripper_width: Some(0.05),
                        buttons: 1,
                        flags: 0,
                    }),
                };
                encode_message(&msg)
            })
            .collect();
        let (mut crashes, mut ok, mut errs) = (0, 0, 0);
        for _ in 0..1_000_000 {
            let input = fuzz_input(&mut rng, &valid);
            match catch_unwind(AssertUnwindSafe(|| (decode_message(&input), decode_prefix(&input).is_ok()))) {
                Err(_) => crashes += 1,
                Ok((Ok(_), _)) => ok += 1,
                Ok((Err(_), _)) => errs += 1,
            }
        }
        outcome(
            identical && crashes == 0,
            format!(
                "resample byte-identical: {identical} ({} bytes); 10^6 fuzz inputs: {crashes} crashes, {ok} decoded, {errs} typed errors",
                a.len()
            ),
        )
    })
}

fn grid_exactness() -> Outcome {
    timed(None, || {
        const N: u64 = 1_000_000;
        let end = tick_time(N - 1, 30.0);
        let mk = |src, seq, t| StreamSample {
            source: src,
            seq,
            device_time: t,
            pose: Pose::IDENTITY,
            gripper_width: src.is_controller().then_some(0.0),
            buttons: 0,
            flags: 0,
        };
        let mut streams = SourceStreams::default();
        for src in Source::ALL {
            *streams.get_mut(src) = vec![mk(src, 0, 0), mk(src, 1, end)];
        }
        let cfg = ResampleConfig {
            hold_limit: u32::MAX,
            ..Default::default()
        };
        let frames = resample(&streams, &CalibrationState::identity(), &ExtrinsicSet::default(), &[], &cfg)
            .unwrap()
            .frames;
        let mut drift = 0u64;
        for (k, f) in frames.iter().enumerate() {
            // round(k * 10^6 / 30), exact in integers
            let want = (k as u64 * 1_000_000 + 15) / 30;
            if f.timeline_time != want || f.index != k as u64 {
                drift += 1;
            }
        }
        outcome(
            frames.len() as u64 == N && drift == 0,
            format!("{} frames, {drift} off-grid, last at {} us", frames.len(), frames.last().map_or(0, |f| f.timeline_time)),
        )
    })
}

fn format_round_trip() -> Outcome {
    timed(None, || {
        let mut rng = SimRng::new(6, 0);
        let mut identical = 0;
        for _ in 0..100 {
            let ep = random_episode(&mut rng, 60);
            let first = ep.to_bytes().unwrap();
            if let Ok(back) = read_episode(&first) {
                if back == ep && back.to_bytes().unwrap() == first {
                    identical += 1;
                }
            }
        }

        let pool: Vec<Vec<u8>> = (0..20)
            .map(|_| random_episode(&mut rng, 8).to_bytes().unwrap())
            .chain([GOLDEN_EPISODE.to_vec()])
            .collect();
        let (mut crc_caught, mut crc_errors, mut prefix_errors, mut missed) = (0, 0, 0, 0);
        for _ in 0..10_000 {
            let mut b = pool[rng.below(pool.len() as u64) as usize].clone();
            let pos = rng.below(b.len() as u64) as usize;
            b[pos] ^= 1 + rng.below(255) as u8;
            let n = b.len();
            let stored = u32::from_le_bytes(b[n - 4..].try_into().unwrap());
            if crc32fast::hash(&b[..n - 4]) != stored {
                crc_caught += 1;
            }
            match read_episode(&b) {
                Err(RecordingError::CrcMismatch { .. }) => crc_errors += 1,
                Err(RecordingError::BadMagic(_) | RecordingError::UnsupportedVersion(_)) if pos < 6 => {
                    prefix_errors += 1
                }
                _ => missed += 1,
            }
        }

        let golden_stable = golden_episode().to_bytes().unwrap() == GOLDEN_EPISODE
            && read_episode(GOLDEN_EPISODE).ok() == Some(golden_episode());
        outcome(
            identical == 100 && crc_caught == 10_000 && missed == 0 && golden_stable,
            format!(
                "{identical}/100 byte-identical; CRC flags {crc_caught}/10^4 corruptions \
                 (reader: {crc_errors} CrcMismatch, {prefix_errors} magic/version, {missed} missed); \
                 golden stable: {golden_stable}"
            ),
        )
    })
}

fn mixing_law() -> Outcome {
    let entries = |kind: SourceKind, n: usize| -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry {
                path: format!("{}/{i:04}.aumi", kind.name()),
                source_kind: kind,
                frame_count: 900,
                checksum: i as u32,
            })
            .collect()
    };
    let au = entries(SourceKind::ActiveUmi, 1000);
    let tele = entries(SourceKind::Teleop, 200);
    let mut counts = Vec::new();
    let mut deterministic = true;
    for ratio in [0.0, 0.01, 0.1] {
        let a = build_mix_manifest(&au, &tele, ratio, 42).unwrap();
        let b = build_mix_manifest(&au, &tele, ratio, 42).unwrap();
        deterministic &= a.to_text() == b.to_text();
        counts.push(a.entries.iter().filter(|e| e.source_kind == SourceKind::Teleop).count());
    }
    outcome(
        counts == [0, 10, 100] && deterministic,
        format!("teleop entries {counts:?} for ratios 0/0.01/0.1, deterministic: {deterministic}"),
    )
}

fn slowdown_fixtures() -> Outcome {
    let rec = |task: &str, method, duration| ThroughputRecord {
        method,
        task: task.into(),
        duration,
    };
    let records = vec![
        rec("rope_boxing", CollectionMethod::BareHand, 100.0),
        rec("rope_boxing", CollectionMethod::ActiveUmi, 206.0),
        rec("rope_boxing", CollectionMethod::Teleoperation, 327.0),
        rec("shirt_folding", CollectionMethod::BareHand, 100.0),
        rec("shirt_folding", CollectionMethod::ActiveUmi, 149.0),
        rec("shirt_folding", CollectionMethod::Teleoperation, 263.0),
    ];
    let rows = slowdown_report(&records).unwrap();
    let get = |task: &str, m| {
        let r = rows.iter().find(|r| r.task == task && r.method == m).unwrap();
        format!("{:.2}", r.ratio)
    };
    let got = [
        get("rope_boxing", CollectionMethod::ActiveUmi),
        get("rope_boxing", CollectionMethod::Teleoperation),
        get("shirt_folding", CollectionMethod::ActiveUmi),
        get("shirt_folding", CollectionMethod::Teleoperation),
    ];
    outcome(got == ["2.06", "3.27", "1.49", "2.63"], format!("ratios {}", got.join(" / ")))
}

fn main() {
    // Honor `cargo test -- --list` and filters well enough to stay quiet.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 12] = [
        ("rpe formula exactness", rpe_exactness),
        ("tape-measure zero law", tape_zero_law),
        ("bias closed form", bias_closed_form),
        ("noise monte carlo oracle", noise_oracle),
        ("calibration recovery", calibration_recovery),
        ("haptic threshold", haptic_threshold),
        ("se3 property suite", se3_suite),
        ("streaming determinism and totality", streaming_determinism_and_totality),
        ("30 hz grid exactness", grid_exactness),
        ("format round trip", format_round_trip),
        ("mixing law", mixing_law),
        ("slowdown fixtures", slowdown_fixtures),
    ];
    let filter = args.iter().find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, f) in criteria {
        if filter.is_some_and(|p| !name.contains(p.as_str())) {
            continue;
        }
        let o = catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!("{} {name}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.ok);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
