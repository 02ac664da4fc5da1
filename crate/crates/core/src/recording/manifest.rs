//! Data-mixing manifests over sets of recorded episodes.
//!
//! Text format, one entry per line after a `#` comment header:
//!
//! ```text
//! # aumi mix manifest
//! # ratio=0.01
//! # seed=7
//! # activeumi_count=1000
//! # teleop_count=10
//! # teleop_pool=50
//! # with_replacement=false
//! activeumi<TAB>path<TAB>frame_count<TAB>crc32-hex
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::episode::{read_episode, RecordingError, SourceKind};
use crate::rng::SimRng;

/// Stream id used for the teleop draw, so manifests do not share a
/// sequence with simulation streams seeded the same way.
const MIX_STREAM: u64 = 0x006d_6978;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("EmptyTeleopPool: ratio {0} requested but no teleop episodes supplied")]
    EmptyTeleopPool(f64),
    #[error("InvalidRatio: {0} is outside [0, 1)")]
    InvalidRatio(f64),
    #[error("ManifestParse: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("ManifestIo: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ManifestEpisode: {path}: {source}")]
    Episode {
        path: PathBuf,
        source: RecordingError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub source_kind: SourceKind,
    pub frame_count: u64,
    /// CRC32 (IEEE) of the whole episode file.
    pub checksum: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeManifest {
    pub entries: Vec<ManifestEntry>,
    pub mix_ratio_requested: f64,
    pub seed: u64,
    pub activeumi_count: usize,
    pub teleop_count: usize,
    pub teleop_pool: usize,
    pub with_replacement: bool,
    pub diagnostics: Vec<String>,
}

/// Number of teleop entries for a mix: `round(ratio * activeumi_count)`.
pub fn teleop_quota(ratio: f64, activeumi_count: usize) -> usize {
    (ratio * activeumi_count as f64).round() as usize
}

/// All ActiveUMI entries in input order, followed by `teleop_quota` teleop
/// entries drawn with the seed (without replacement unless the pool is too
/// small).
pub fn build_mix_manifest(
    activeumi: &[ManifestEntry],
    teleop: &[ManifestEntry],
    ratio: f64,
    seed: u64,
) -> Result<EpisodeManifest, ManifestError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(ManifestError::InvalidRatio(ratio));
    }
    let quota = teleop_quota(ratio, activeumi.len());
    if ratio > 0.0 && teleop.is_empty() {
        return Err(ManifestError::EmptyTeleopPool(ratio));
    }
    let mut diagnostics = Vec::new();
    let mut rng = SimRng::new(seed, MIX_STREAM);
    let with_replacement = quota > teleop.len();
    let picks: Vec<usize> = if with_replacement {
        diagnostics.push(format!(
            "teleop pool has {} episodes, {quota} requested: sampled with replacement",
            teleop.len()
        ));
        (0..quota).map(|_| rng.below(teleop.len() as u64) as usize).collect()
    } else {
        // partial Fisher-Yates
        let mut idx: Vec<usize> = (0..teleop.len()).collect();
        for i in 0..quota {
            let j = i + rng.below((idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(quota);
        idx
    };
    let mut entries = activeumi.to_vec();
    entries.extend(picks.iter().map(|&i| teleop[i].clone()));
    Ok(EpisodeManifest {
        entries,
        mix_ratio_requested: ratio,
        seed,
        activeumi_count: activeumi.len(),
        teleop_count: quota,
        teleop_pool: teleop.len(),
        with_replacement,
        diagnostics,
    })
}

impl EpisodeManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# aumi mix manifest").unwrap();
        writeln!(s, "# ratio={}", self.mix_ratio_requested).unwrap();
        writeln!(s, "# seed={}", self.seed).unwrap();
        writeln!(s, "# activeumi_count={}", self.activeumi_count).unwrap();
        writeln!(s, "# teleop_count={}", self.teleop_count).unwrap();
        writeln!(s, "# teleop_pool={}", self.teleop_pool).unwrap();
        writeln!(s, "# with_replacement={}", self.with_replacement).unwrap();
        for d in &self.diagnostics {
            writeln!(s, "# diagnostic: {d}").unwrap();
        }
        for e in &self.entries {
            writeln!(
                s,
                "{}\t{}\t{}\t{:08x}",
                e.source_kind.name(),
                e.path,
                e.frame_count,
                e.checksum
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let err = |line: usize, message: String| ManifestError::Parse { line, message };
        let mut m = EpisodeManifest {
            entries: Vec::new(),
            mix_ratio_requested: 0.0,
            seed: 0,
            activeumi_count: 0,
            teleop_count: 0,
            teleop_pool: 0,
            with_replacement: false,
            diagnostics: Vec::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(d) = comment.trim().strip_prefix("diagnostic: ") {
                    m.diagnostics.push(d.to_owned());
                    continue;
                }
                let Some((k, v)) = comment.trim().split_once('=') else {
                    continue;
                };
                let bad = |_| err(n, format!("bad value for {k}: {v:?}"));
                match k {
                    "ratio" => m.mix_ratio_requested = v.parse().map_err(|e: std::num::ParseFloatError| err(n, e.to_string()))?,
                    "seed" => m.seed = v.parse().map_err(bad)?,
                    "activeumi_count" => m.activeumi_count = v.parse().map_err(bad)?,
                    "teleop_count" => m.teleop_count = v.parse().map_err(bad)?,
                    "teleop_pool" => m.teleop_pool = v.parse().map_err(bad)?,
                    "with_replacement" => {
                        m.with_replacement = v.parse().map_err(|_| err(n, format!("bad bool {v:?}")))?
                    }
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(err(n, format!("expected 4 columns, found {}", cols.len())));
            }
            let source_kind =
                SourceKind::from_name(cols[0]).ok_or_else(|| err(n, format!("source kind {:?}", cols[0])))?;
            let frame_count = cols[2].parse().map_err(|_| err(n, format!("frame count {:?}", cols[2])))?;
            if cols[3].len() != 8 {
                return Err(err(n, format!("checksum {:?}", cols[3])));
            }
            let checksum =
                u32::from_str_radix(cols[3], 16).map_err(|_| err(n, format!("checksum {:?}", cols[3])))?;
            m.entries.push(ManifestEntry {
                path: cols[1].to_owned(),
                source_kind,
                frame_count,
                checksum,
            });
        }
        Ok(m)
    }
}

/// Describes one episode file for inclusion in a manifest.
pub fn describe_episode_file(path: &Path, display_path: String) -> Result<ManifestEntry, ManifestError> {
    let bytes = fs::read(path).map_err(|source| ManifestError::Io {
        path: path.to_owned(),
        source,
    })?;
    let ep = read_episode(&bytes).map_err(|source| ManifestError::Episode {
        path: path.to_owned(),
        source,
    })?;
    Ok(ManifestEntry {
        path: display_path,
        source_kind: ep.header.source_kind,
        frame_count: ep.frames.len() as u64,
        checksum: crc32fast::hash(&bytes),
    })
}

/// Every `*.aumi` file directly under `dir`, sorted by file name.
pub fn scan_episode_dir(dir: &Path) -> Result<Vec<ManifestEntry>, ManifestError> {
    let io = |source| ManifestError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "aumi"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| describe_episode_file(p, p.display().to_string()))
        .collect()
}

/// Re-reads every entry relative to `base` and reports mismatches.
pub fn verify_manifest(manifest: &EpisodeManifest, base: &Path) -> Vec<String> {
    let mut problems = Vec::new();
    for e in &manifest.entries {
        let p = base.join(&e.path);
        match fs::read(&p) {
            Err(err) => problems.push(format!("{}: {err}", e.path)),
            Ok(bytes) => {
                let crc = crc32fast::hash(&bytes);
                if crc != e.checksum {
                    problems.push(format!("{}: checksum {crc:08x}, manifest says {:08x}", e.path, e.checksum));
                }
            }
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(kind: SourceKind, n: usize) -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry {
                path: format!("{}/{i:05}.aumi", kind.name()),
                source_kind: kind,
                frame_count: 100 + i as u64,
                checksum: i as u32 * 7919,
            })
            .collect()
    }

    #[test]
    fn one_percent_of_a_thousand() {
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 1000), &set(SourceKind::Teleop, 50), 0.01, 3).unwrap();
        let teleop = m.entries.iter().filter(|e| e.source_kind == SourceKind::Teleop).count();
        assert_eq!(teleop, 10);
        assert_eq!(m.entries.len(), 1010);
        assert!(!m.with_replacement);
    }

    #[test]
    fn zero_ratio_needs_no_teleop() {
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 20), &[], 0.0, 1).unwrap();
        assert_eq!(m.entries.len(), 20);
        assert!(m.entries.iter().all(|e| e.source_kind == SourceKind::ActiveUmi));
    }

    #[test]
    fn errors() {
        let a = set(SourceKind::ActiveUmi, 10);
        assert!(matches!(build_mix_manifest(&a, &[], 0.1, 0), Err(ManifestError::EmptyTeleopPool(_))));
        assert!(matches!(build_mix_manifest(&a, &[], 1.0, 0), Err(ManifestError::InvalidRatio(_))));
        assert!(matches!(build_mix_manifest(&a, &[], -0.1, 0), Err(ManifestError::InvalidRatio(_))));
    }

    #[test]
    fn small_pool_falls_back_to_replacement() {
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 100), &set(SourceKind::Teleop, 3), 0.1, 5).unwrap();
        assert_eq!(m.teleop_count, 10);
        assert!(m.with_replacement);
        assert_eq!(m.diagnostics.len(), 1);
    }

    #[test]
    fn no_duplicates_without_replacement() {
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 300), &set(SourceKind::Teleop, 40), 0.1, 9).unwrap();
        let mut picked: Vec<_> = m.entries[300..].iter().map(|e| e.path.clone()).collect();
        picked.sort();
        picked.dedup();
        assert_eq!(picked.len(), 30);
    }

    #[test]
    fn text_round_trip() {
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 30), &set(SourceKind::Teleop, 5), 0.1, 11).unwrap();
        let text = m.to_text();
        let back = EpisodeManifest::parse(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
        let m = build_mix_manifest(&set(SourceKind::ActiveUmi, 100), &set(SourceKind::Teleop, 3), 0.1, 5).unwrap();
        assert_eq!(EpisodeManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = EpisodeManifest::parse("# ratio=0\nactiveumi\tx\t1\n").unwrap_err();
        assert!(matches!(err, ManifestError::Parse { line: 2, .. }));
    }
}
