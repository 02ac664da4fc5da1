//! Episode persistence and data-mixing manifests.

pub mod episode;
pub mod manifest;

pub use episode::{
    dump_tsv, encode_episode, read_episode, validate_episode, write_episode, Diagnostic,
    DiagnosticKind, Episode, EpisodeHeader, RecordingError, SourceKind, ValidationLimits,
    EPISODE_MAGIC, FORMAT_VERSION, FRAME_RECORD_LEN,
};
pub use manifest::{
    build_mix_manifest, describe_episode_file, scan_episode_dir, teleop_quota, verify_manifest,
    EpisodeManifest, ManifestEntry, ManifestError,
};
