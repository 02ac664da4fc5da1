//! Three simulated devices stream the wire protocol over local TCP sockets;
//! the recorder reads each connection on its own thread and assembles
//! episodes.
//!
//! cargo run --example wire_loopback

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;

use aumi::calibration::PlaceholderSpec;
use aumi::geometry::{pose_distance, ExtrinsicSet};
use aumi::pipeline::{record_streams, simulate_capture, CaptureScenario, SessionOptions};
use aumi::streaming::Source;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = CaptureScenario {
        seed: 5,
        ..Default::default()
    };
    let capture = simulate_capture(&scenario, &ExtrinsicSet::default(), &PlaceholderSpec::default())?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;

    let devices: Vec<_> = Source::ALL
        .iter()
        .map(|&src| {
            let bytes = capture.encode(src);
            thread::spawn(move || -> std::io::Result<()> {
                let mut sock = TcpStream::connect(addr)?;
                // dribble the stream out in small writes
                for chunk in bytes.chunks(997) {
                    sock.write_all(chunk)?;
                }
                Ok(())
            })
        })
        .collect();
    let conns: Vec<TcpStream> = (0..3).map(|_| listener.accept().map(|c| c.0)).collect::<Result<_, _>>()?;
    let session = record_streams(conns, SessionOptions::default())?;
    for d in devices {
        d.join().expect("device thread")?;
    }

    for (src, c) in Source::ALL.iter().zip(session.clocks) {
        println!("{:<5} clock offset {} us", src.name(), c.offset);
    }
    let cal = &session.calibrations[0];
    let err = pose_distance(&cal.world_from_tracking, &capture.world_from_tracking);
    println!("dock calibration error {:.2e} m / {:.2e} rad", err.translational, err.angular);
    for ep in &session.episodes {
        println!(
            "episode: {} frames from {} us, events {:?}",
            ep.frames.len(),
            ep.header.created_at,
            ep.events
        );
    }
    Ok(())
}
