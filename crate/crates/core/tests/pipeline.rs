use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;

use aumi::calibration::PlaceholderSpec;
use aumi::geometry::{pose_distance, ExtrinsicSet};
use aumi::pipeline::{
    record_streams, simulate_capture, write_episodes, CaptureCalibration, CaptureScenario, SessionOptions,
};
use aumi::recording::{read_episode, validate_episode, ValidationLimits};
use aumi::streaming::{Source, ALL_VALID};

fn scenario(seed: u64, calibration: CaptureCalibration) -> CaptureScenario {
    CaptureScenario {
        seed,
        calibration,
        ..Default::default()
    }
}

#[test]
fn tcp_session_matches_in_memory_session() {
    let sc = scenario(8, CaptureCalibration::Dock);
    let cap = simulate_capture(&sc, &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
    let bytes: Vec<Vec<u8>> = Source::ALL.iter().map(|&s| cap.encode(s)).collect();
    let local = record_streams(bytes.iter().map(|b| b.as_slice()).collect(), SessionOptions::default()).unwrap();

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    // connect in reverse order so connection ids differ from source codes
    let devices: Vec<_> = bytes
        .iter()
        .rev()
        .cloned()
        .map(|b| {
            let h = thread::spawn(move || {
                let mut sock = TcpStream::connect(addr).unwrap();
                for chunk in b.chunks(313) {
                    sock.write_all(chunk).unwrap();
                }
            });
            let conn = listener.accept().unwrap().0;
            (h, conn)
        })
        .collect();
    let (handles, conns): (Vec<_>, Vec<_>) = devices.into_iter().unzip();
    let remote = record_streams(conns, SessionOptions::default()).unwrap();
    for h in handles {
        h.join().unwrap();
    }

    assert_eq!(remote.episodes, local.episodes);
    assert_eq!(remote.clocks, local.clocks);
    assert_eq!(remote.episodes.len(), 2);
    let g = &remote.calibrations[0].world_from_tracking;
    let d = pose_distance(g, &cap.world_from_tracking);
    assert!(d.translational < 1e-9 && d.angular < 1e-9);
}

#[test]
fn recorded_episodes_are_clean_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (seed, cal) in [(1, CaptureCalibration::Dock), (2, CaptureCalibration::ZeroPoint)] {
        let cap = simulate_capture(&scenario(seed, cal), &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
        let bytes: Vec<Vec<u8>> = Source::ALL.iter().map(|&s| cap.encode(s)).collect();
        let opts = SessionOptions {
            task_name: format!("seed{seed}"),
            ..Default::default()
        };
        let session = record_streams(bytes.iter().map(|b| b.as_slice()).collect(), opts).unwrap();
        assert!(session.rejected.is_empty());
        let paths = write_episodes(dir.path(), &session.episodes).unwrap();
        assert_eq!(paths.len(), 2);
        for (p, ep) in paths.iter().zip(&session.episodes) {
            let back = read_episode(&std::fs::read(p).unwrap()).unwrap();
            assert_eq!(&back, ep);
            assert!(validate_episode(&back, &ValidationLimits::default()).is_empty());
            assert!(back.frames.iter().all(|f| f.validity == ALL_VALID));
            assert_eq!(back.header.calibration, session.calibrations[0]);
        }
    }
}
