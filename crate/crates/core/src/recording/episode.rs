//! Episode files.
//!
//! ```text
//! "AUMI" | version u16 | meta_len u32 | meta (UTF-8 `key=value\n` lines)
//! calibration pose 7xf64 | method u8
//! extrinsic_count u8 | { parent u8, child u8, pose 7xf64 }*
//! rate f64 | frame_count u64 | frame records (202 bytes each)
//! event_count u32 | { frame u64, code u8 }*
//! crc32 u32 (IEEE, over every preceding byte)
//! ```
//!
//! Frame record: `timestamp u64, validity u8, pad[7], left/right/head pose
//! 7xf64 each, left/right width f64, event_count u16`. Little-endian.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::calibration::{CalibrationMethod, CalibrationState};
use crate::geometry::{Extrinsic, ExtrinsicSet, FrameId, Pose};
use crate::streaming::{tick_time, EventCode, Source, SyncedFrame};

pub const EPISODE_MAGIC: [u8; 4] = *b"AUMI";
pub const FORMAT_VERSION: u16 = 1;
/// magic, version, metadata length and checksum.
const MIN_FILE_LEN: usize = 4 + 2 + 4 + 4;
pub const FRAME_RECORD_LEN: usize = 8 + 1 + 7 + 3 * 56 + 2 * 8 + 2;
const EXTRINSIC_RECORD_LEN: usize = 2 + 56;
const EVENT_RECORD_LEN: usize = 9;

const KEY_TASK: &str = "task_name";
const KEY_OPERATOR: &str = "operator_id";
const KEY_SOURCE_KIND: &str = "source_kind";
const KEY_CREATED: &str = "created_at_us";
const KEY_CALIB_TIME: &str = "calibration.established_at_us";
const RESERVED_KEYS: [&str; 5] = [KEY_TASK, KEY_OPERATOR, KEY_SOURCE_KIND, KEY_CREATED, KEY_CALIB_TIME];

/// Metadata key recording which tracked point defines the zero-point origin.
pub const KEY_ZERO_POINT_ORIGIN: &str = "zero_point_origin";
pub const ZERO_POINT_ORIGIN_VALUE: &str = "pressing_controller_tip";

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("BadMagic: {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("UnsupportedVersion: {0}")]
    UnsupportedVersion(u16),
    #[error("CrcMismatch: stored {stored:08x}, computed {computed:08x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("TruncatedFile: need {needed} bytes, have {available}")]
    TruncatedFile { needed: usize, available: usize },
    #[error("Malformed: {0}")]
    Malformed(String),
    #[error("InvalidMetadata: {0}")]
    InvalidMetadata(String),
    #[error("Io: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceKind {
    ActiveUmi,
    Teleop,
}

impl SourceKind {
    pub fn name(self) -> &'static str {
        match self {
            SourceKind::ActiveUmi => "activeumi",
            SourceKind::Teleop => "teleop",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "activeumi" => Some(SourceKind::ActiveUmi),
            "teleop" => Some(SourceKind::Teleop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeHeader {
    pub format_version: u16,
    pub task_name: String,
    pub operator_id: String,
    pub source_kind: SourceKind,
    pub rate: f64,
    pub calibration: CalibrationState,
    pub extrinsics: ExtrinsicSet,
    /// Microseconds since the Unix epoch, as supplied by the producer.
    pub created_at: u64,
    /// Additional `key=value` metadata, written in key order.
    pub metadata: BTreeMap<String, String>,
}

impl EpisodeHeader {
    pub fn new(task_name: impl Into<String>, operator_id: impl Into<String>, source_kind: SourceKind) -> Self {
        let mut metadata = BTreeMap::new();
        metadata.insert(KEY_ZERO_POINT_ORIGIN.to_owned(), ZERO_POINT_ORIGIN_VALUE.to_owned());
        EpisodeHeader {
            format_version: FORMAT_VERSION,
            task_name: task_name.into(),
            operator_id: operator_id.into(),
            source_kind,
            rate: crate::streaming::DEFAULT_RATE_HZ,
            calibration: CalibrationState::identity(),
            extrinsics: ExtrinsicSet::default(),
            created_at: 0,
            metadata,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub frames: Vec<SyncedFrame>,
    /// `(frame index, code)` in file order.
    pub events: Vec<(u64, EventCode)>,
}

impl Episode {
    /// Builds an episode whose event list is gathered from the frames.
    pub fn new(header: EpisodeHeader, frames: Vec<SyncedFrame>) -> Self {
        let events = frames
            .iter()
            .flat_map(|f| f.events.iter().map(move |&c| (f.index, c)))
            .collect();
        Episode {
            header,
            frames,
            events,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, RecordingError> {
        encode_episode(self)
    }
}

fn check_meta_text(s: &str, what: &str, is_key: bool) -> Result<(), RecordingError> {
    if s.contains('\n') || (is_key && (s.contains('=') || s.is_empty())) {
        return Err(RecordingError::InvalidMetadata(format!("{what} {s:?}")));
    }
    Ok(())
}

fn metadata_block(h: &EpisodeHeader) -> Result<String, RecordingError> {
    let mut out = String::new();
    let mut push = |k: &str, v: &str| -> Result<(), RecordingError> {
        check_meta_text(k, "key", true)?;
        check_meta_text(v, "value", false)?;
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
        Ok(())
    };
    push(KEY_TASK, &h.task_name)?;
    push(KEY_OPERATOR, &h.operator_id)?;
    push(KEY_SOURCE_KIND, h.source_kind.name())?;
    push(KEY_CREATED, &h.created_at.to_string())?;
    push(KEY_CALIB_TIME, &h.calibration.established_at.to_string())?;
    for (k, v) in &h.metadata {
        if RESERVED_KEYS.contains(&k.as_str()) {
            return Err(RecordingError::InvalidMetadata(format!("reserved key {k:?}")));
        }
        push(k, v)?;
    }
    Ok(out)
}

fn put_pose(buf: &mut Vec<u8>, p: &Pose) {
    for v in p.to_array() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_episode(ep: &Episode) -> Result<Vec<u8>, RecordingError> {
    let h = &ep.header;
    let meta = metadata_block(h)?;
    if h.extrinsics.len() > u8::MAX as usize {
        return Err(RecordingError::InvalidMetadata("more than 255 extrinsics".into()));
    }
    if ep.events.len() > u32::MAX as usize {
        return Err(RecordingError::InvalidMetadata("too many events".into()));
    }
    let mut counts = vec![0u32; ep.frames.len()];
    for &(f, _) in &ep.events {
        if let Some(c) = counts.get_mut(f as usize) {
            *c += 1;
        }
    }
    let mut buf = Vec::with_capacity(
        64 + meta.len() + ep.frames.len() * FRAME_RECORD_LEN + ep.events.len() * EVENT_RECORD_LEN,
    );
    buf.extend_from_slice(&EPISODE_MAGIC);
    buf.extend_from_slice(&h.format_version.to_le_bytes());
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta.as_bytes());
    put_pose(&mut buf, &h.calibration.world_from_tracking);
    buf.push(h.calibration.method.code());
    buf.push(h.extrinsics.len() as u8);
    for e in h.extrinsics.iter() {
        buf.push(e.parent.code());
        buf.push(e.child.code());
        put_pose(&mut buf, &e.transform);
    }
    buf.extend_from_slice(&h.rate.to_le_bytes());
    buf.extend_from_slice(&(ep.frames.len() as u64).to_le_bytes());
    for (f, &count) in ep.frames.iter().zip(&counts) {
        buf.extend_from_slice(&f.timeline_time.to_le_bytes());
        buf.push(f.validity);
        buf.extend_from_slice(&[0u8; 7]);
        put_pose(&mut buf, &f.left_tip);
        put_pose(&mut buf, &f.right_tip);
        put_pose(&mut buf, &f.head);
        buf.extend_from_slice(&f.left_width.to_le_bytes());
        buf.extend_from_slice(&f.right_width.to_le_bytes());
        let count = u16::try_from(count)
            .map_err(|_| RecordingError::InvalidMetadata(format!("frame {} has {count} events", f.index)))?;
        buf.extend_from_slice(&count.to_le_bytes());
    }
    buf.extend_from_slice(&(ep.events.len() as u32).to_le_bytes());
    for &(frame, code) in &ep.events {
        buf.extend_from_slice(&frame.to_le_bytes());
        buf.push(code.0);
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Writes the encoded episode, returning the byte count.
pub fn write_episode<W: Write>(ep: &Episode, sink: &mut W) -> Result<u64, RecordingError> {
    let bytes = encode_episode(ep)?;
    sink.write_all(&bytes)?;
    sink.flush()?;
    Ok(bytes.len() as u64)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn need(&self, n: usize) -> Result<(), RecordingError> {
        let needed = self.pos.checked_add(n).ok_or(RecordingError::TruncatedFile {
            needed: usize::MAX,
            available: self.buf.len(),
        })?;
        if needed > self.buf.len() {
            return Err(RecordingError::TruncatedFile {
                needed,
                available: self.buf.len(),
            });
        }
        Ok(())
    }
    fn bytes(&mut self, n: usize) -> Result<&'a [u8], RecordingError> {
        self.need(n)?;
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn skip(&mut self, n: usize) -> Result<(), RecordingError> {
        self.bytes(n).map(|_| ())
    }
    fn u8(&mut self) -> Result<u8, RecordingError> {
        Ok(self.bytes(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, RecordingError> {
        Ok(u16::from_le_bytes(self.bytes(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, RecordingError> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, RecordingError> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, RecordingError> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn pose(&mut self) -> Result<Pose, RecordingError> {
        let mut a = [0.0; 7];
        for v in &mut a {
            *v = self.f64()?;
        }
        Ok(Pose::from_array(a))
    }
}

/// Walks the variable-length layout, returning the offset of the CRC.
fn layout_end(bytes: &[u8]) -> Result<usize, RecordingError> {
    let mut r = Reader { buf: bytes, pos: 6 };
    let meta_len = r.u32()? as usize;
    r.skip(meta_len)?;
    r.skip(57)?;
    let n_ext = r.u8()? as usize;
    r.skip(n_ext * EXTRINSIC_RECORD_LEN)?;
    r.skip(8)?;
    let n_frames = r.u64()?;
    let frame_bytes = usize::try_from(n_frames)
        .ok()
        .and_then(|n| n.checked_mul(FRAME_RECORD_LEN))
        .unwrap_or(usize::MAX);
    r.skip(frame_bytes)?;
    let n_events = r.u32()? as usize;
    r.skip(n_events * EVENT_RECORD_LEN)?;
    r.need(4)?;
    Ok(r.pos)
}

/// Parses an episode file image. Checks, in order: magic, version, CRC,
/// layout length, then field contents.
pub fn read_episode(bytes: &[u8]) -> Result<Episode, RecordingError> {
    let have = bytes.len().min(4);
    if bytes[..have] != EPISODE_MAGIC[..have] {
        return Err(RecordingError::BadMagic(bytes[..have].to_vec()));
    }
    if bytes.len() < 6 {
        return Err(RecordingError::TruncatedFile {
            needed: 6,
            available: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(RecordingError::UnsupportedVersion(version));
    }
    if bytes.len() < MIN_FILE_LEN {
        return Err(RecordingError::TruncatedFile {
            needed: MIN_FILE_LEN,
            available: bytes.len(),
        });
    }
    // The checksum is always the last four bytes; verifying it before the
    // layout walk means a corrupted length field reads as corruption, not
    // as a short file.
    let crc_at = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[crc_at..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..crc_at]);
    if stored != computed {
        return Err(RecordingError::CrcMismatch { stored, computed });
    }
    let end = layout_end(bytes)?;
    if end != crc_at {
        return Err(RecordingError::Malformed(format!("{} trailing bytes after the event section", crc_at - end)));
    }
    parse_checked(&bytes[..crc_at], version)
}

fn malformed(msg: impl Into<String>) -> RecordingError {
    RecordingError::Malformed(msg.into())
}

fn parse_checked(bytes: &[u8], version: u16) -> Result<Episode, RecordingError> {
    let mut r = Reader { buf: bytes, pos: 6 };
    let meta_len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.bytes(meta_len)?).map_err(|_| malformed("metadata is not UTF-8"))?;
    let mut fields = BTreeMap::new();
    let mut order = Vec::new();
    for line in meta.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| malformed(format!("metadata line {line:?}")))?;
        if fields.insert(k.to_owned(), v.to_owned()).is_some() {
            return Err(malformed(format!("duplicate metadata key {k:?}")));
        }
        order.push(k.to_owned());
    }
    let mut take = |k: &str| fields.remove(k).ok_or_else(|| malformed(format!("missing metadata key {k:?}")));
    let task_name = take(KEY_TASK)?;
    let operator_id = take(KEY_OPERATOR)?;
    let kind = take(KEY_SOURCE_KIND)?;
    let source_kind = SourceKind::from_name(&kind).ok_or_else(|| malformed(format!("source_kind {kind:?}")))?;
    let parse_u64 = |s: String, k: &str| s.parse::<u64>().map_err(|_| malformed(format!("{k} {s:?}")));
    let created_at = parse_u64(take(KEY_CREATED)?, KEY_CREATED)?;
    let established_at = parse_u64(take(KEY_CALIB_TIME)?, KEY_CALIB_TIME)?;

    let world_from_tracking = r.pose()?;
    let method_code = r.u8()?;
    let method = CalibrationMethod::from_code(method_code)
        .ok_or_else(|| malformed(format!("calibration method {method_code}")))?;
    let n_ext = r.u8()?;
    let mut ext = Vec::with_capacity(n_ext as usize);
    for _ in 0..n_ext {
        let parent = FrameId::from_code(r.u8()?).map_err(|e| malformed(e.to_string()))?;
        let child = FrameId::from_code(r.u8()?).map_err(|e| malformed(e.to_string()))?;
        ext.push(Extrinsic::new(parent, child, r.pose()?));
    }
    let extrinsics = ExtrinsicSet::new(ext).map_err(|e| malformed(e.to_string()))?;
    let rate = r.f64()?;
    let n_frames = r.u64()?;
    let mut frames = Vec::with_capacity(n_frames as usize);
    let mut counts = Vec::with_capacity(n_frames as usize);
    for index in 0..n_frames {
        let timeline_time = r.u64()?;
        let validity = r.u8()?;
        r.skip(7)?;
        let left_tip = r.pose()?;
        let right_tip = r.pose()?;
        let head = r.pose()?;
        let left_width = r.f64()?;
        let right_width = r.f64()?;
        counts.push(r.u16()?);
        frames.push(SyncedFrame {
            index,
            timeline_time,
            left_tip,
            right_tip,
            head,
            left_width,
            right_width,
            validity,
            events: Vec::new(),
        });
    }
    let n_events = r.u32()?;
    let mut events = Vec::with_capacity(n_events as usize);
    for _ in 0..n_events {
        let frame = r.u64()?;
        let code = EventCode(r.u8()?);
        let f = frames
            .get_mut(frame as usize)
            .ok_or_else(|| malformed(format!("event references frame {frame} of {n_frames}")))?;
        f.events.push(code);
        events.push((frame, code));
    }
    for (f, &c) in frames.iter().zip(&counts) {
        if f.events.len() != c as usize {
            return Err(malformed(format!(
                "frame {} declares {c} events, event section has {}",
                f.index,
                f.events.len()
            )));
        }
    }

    let metadata: BTreeMap<String, String> = fields;
    // Extra keys must appear in sorted order for the image to be canonical.
    let extra_order: Vec<&String> = order.iter().filter(|k| !RESERVED_KEYS.contains(&k.as_str())).collect();
    if extra_order.windows(2).any(|w| w[0] >= w[1]) {
        return Err(malformed("metadata keys out of order"));
    }

    Ok(Episode {
        header: EpisodeHeader {
            format_version: version,
            task_name,
            operator_id,
            source_kind,
            rate,
            calibration: CalibrationState {
                world_from_tracking,
                method,
                established_at,
            },
            extrinsics,
            created_at,
            metadata,
        },
        frames,
        events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationLimits {
    pub max_gripper_width: f64,
    /// Longest tolerated run of consecutive invalid frames per channel.
    pub gap_limit: u32,
    pub quaternion_tolerance: f64,
}

pub const DEFAULT_MAX_GRIPPER_WIDTH: f64 = 0.1;
pub const DEFAULT_GAP_LIMIT: u32 = 15;

impl Default for ValidationLimits {
    fn default() -> Self {
        ValidationLimits {
            max_gripper_width: DEFAULT_MAX_GRIPPER_WIDTH,
            gap_limit: DEFAULT_GAP_LIMIT,
            quaternion_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiagnosticKind {
    BadRate,
    IndexGap,
    OffGrid,
    NonUnitQuaternion,
    NonFinitePose,
    WidthOutOfRange,
    ValidityGap,
    EventOutOfRange,
}

impl DiagnosticKind {
    /// Kinds that make a timeline unusable for replay.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            DiagnosticKind::BadRate
                | DiagnosticKind::IndexGap
                | DiagnosticKind::OffGrid
                | DiagnosticKind::NonUnitQuaternion
                | DiagnosticKind::NonFinitePose
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub frame: Option<u64>,
    pub channel: Option<&'static str>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(fr) = self.frame {
            write!(f, " frame={fr}")?;
        }
        if let Some(c) = self.channel {
            write!(f, " channel={c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

pub fn validate_episode(ep: &Episode, limits: &ValidationLimits) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |kind, frame, channel, message: String| {
        out.push(Diagnostic {
            kind,
            frame,
            channel,
            message,
        })
    };
    let rate = ep.header.rate;
    let rate_ok = rate.is_finite() && rate > 0.0;
    if !rate_ok {
        diag(DiagnosticKind::BadRate, None, None, format!("rate {rate}"));
    }
    let calib_q = ep.header.calibration.world_from_tracking.rotation;
    if !calib_q.is_unit(limits.quaternion_tolerance) {
        diag(
            DiagnosticKind::NonUnitQuaternion,
            None,
            Some("calibration"),
            format!("norm {}", calib_q.norm()),
        );
    }

    let mut runs = [0u32; 3];
    for (i, f) in ep.frames.iter().enumerate() {
        let i = i as u64;
        if f.index != i {
            diag(DiagnosticKind::IndexGap, Some(i), None, format!("index {} at position {i}", f.index));
        }
        if rate_ok {
            let want = tick_time(i, rate);
            if f.timeline_time != want {
                diag(
                    DiagnosticKind::OffGrid,
                    Some(i),
                    None,
                    format!("timestamp {} us, grid expects {want} us", f.timeline_time),
                );
            }
        }
        for src in Source::ALL {
            let p = f.pose(src);
            if !p.is_finite() {
                diag(DiagnosticKind::NonFinitePose, Some(i), Some(src.name()), "non-finite pose".into());
            } else if !p.rotation.is_unit(limits.quaternion_tolerance) {
                diag(
                    DiagnosticKind::NonUnitQuaternion,
                    Some(i),
                    Some(src.name()),
                    format!("quaternion norm {}", p.rotation.norm()),
                );
            }
        }
        for (w, name) in [(f.left_width, "left_width"), (f.right_width, "right_width")] {
            if !(0.0..=limits.max_gripper_width).contains(&w) {
                diag(
                    DiagnosticKind::WidthOutOfRange,
                    Some(i),
                    Some(name),
                    format!("width {w} m outside [0, {}]", limits.max_gripper_width),
                );
            }
        }
        for (s, src) in Source::ALL.iter().enumerate() {
            if f.is_valid(*src) {
                runs[s] = 0;
            } else {
                runs[s] += 1;
                if runs[s] == limits.gap_limit + 1 {
                    diag(
                        DiagnosticKind::ValidityGap,
                        Some(i),
                        Some(src.name()),
                        format!("more than {} consecutive invalid frames", limits.gap_limit),
                    );
                }
            }
        }
    }
    let n = ep.frames.len() as u64;
    for &(frame, code) in &ep.events {
        if frame >= n {
            diag(
                DiagnosticKind::EventOutOfRange,
                Some(frame),
                None,
                format!("event {} beyond last frame {}", code.0, n.saturating_sub(1)),
            );
        }
    }
    out
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_pose(out: &mut String, p: &Pose) {
    for v in p.to_array() {
        out.push('\t');
        out.push_str(&hex(v));
    }
}

/// Tab-separated dump used to compare independent readers. Every float is
/// printed as the 16-hex-digit image of its IEEE-754 bits.
///
/// ```text
/// header  <key>  <value>            (format_version, metadata in file order, rate)
/// calibration  <method u8>  <7 pose floats>
/// extrinsic  <parent u8>  <child u8>  <7 pose floats>
/// frame  <index>  <time_us>  <validity>  <21 pose floats>  <lw>  <rw>  <event_count>
/// event  <frame>  <code>
/// ```
pub fn dump_tsv(ep: &Episode) -> Result<String, RecordingError> {
    let h = &ep.header;
    let mut out = String::new();
    writeln!(out, "header\tformat_version\t{}", h.format_version).unwrap();
    for line in metadata_block(h)?.lines() {
        let (k, v) = line.split_once('=').unwrap();
        writeln!(out, "header\t{k}\t{v}").unwrap();
    }
    writeln!(out, "header\trate\t{}", hex(h.rate)).unwrap();
    out.push_str(&format!("calibration\t{}", h.calibration.method.code()));
    hex_pose(&mut out, &h.calibration.world_from_tracking);
    out.push('\n');
    for e in h.extrinsics.iter() {
        out.push_str(&format!("extrinsic\t{}\t{}", e.parent.code(), e.child.code()));
        hex_pose(&mut out, &e.transform);
        out.push('\n');
    }
    for f in &ep.frames {
        out.push_str(&format!("frame\t{}\t{}\t{}", f.index, f.timeline_time, f.validity));
        hex_pose(&mut out, &f.left_tip);
        hex_pose(&mut out, &f.right_tip);
        hex_pose(&mut out, &f.head);
        writeln!(out, "\t{}\t{}\t{}", hex(f.left_width), hex(f.right_width), f.events.len()).unwrap();
    }
    for &(frame, code) in &ep.events {
        writeln!(out, "event\t{frame}\t{}", code.0).unwrap();
    }
    Ok(out)
}
