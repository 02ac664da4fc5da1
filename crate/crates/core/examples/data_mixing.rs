//! Mixing a small share of teleoperated episodes into a large ActiveUMI set.
//!
//! cargo run --example data_mixing

use aumi::recording::{build_mix_manifest, EpisodeManifest, ManifestEntry, SourceKind};

fn entries(prefix: &str, n: usize, kind: SourceKind) -> Vec<ManifestEntry> {
    (0..n)
        .map(|i| ManifestEntry {
            path: format!("{prefix}/{i:05}.aumi"),
            source_kind: kind,
            frame_count: 300,
            checksum: i as u32,
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wild = entries("activeumi", 1000, SourceKind::ActiveUmi);
    let teleop = entries("teleop", 200, SourceKind::Teleop);
    for ratio in [0.0, 0.01, 0.1] {
        let m = build_mix_manifest(&wild, &teleop, ratio, 42)?;
        println!("ratio {ratio:<5} -> {} activeumi + {} teleop", m.activeumi_count, m.teleop_count);
    }
    // A tiny teleop pool forces sampling with replacement.
    let small = entries("teleop", 3, SourceKind::Teleop);
    let m = build_mix_manifest(&wild, &small, 0.01, 42)?;
    println!("{:?}", m.diagnostics);

    let text = m.to_text();
    assert_eq!(EpisodeManifest::parse(&text)?, m);
    for line in text.lines().filter(|l| l.starts_with('#')) {
        println!("{line}");
    }
    Ok(())
}
