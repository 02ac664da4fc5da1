//! Session assembly: wire messages in, calibrated episodes out.
//!
//! A [`SessionRecorder`] collects the per-device message streams of one
//! capture session. Calibration events are applied in time order, episode
//! markers cut the timeline into segments, and each segment is resampled
//! into an [`Episode`]. [`record_streams`] runs the recorder behind one
//! reader thread per connection.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use thiserror::Error;

use crate::calibration::{
    dock_calibrate, reset_zero_point_with, CalibrationError, CalibrationSession, CalibrationState,
    PlaceholderSpec, ResetMode,
};
use crate::config::PipelineConfig;
use crate::geometry::{compose, inverse, ExtrinsicSet, FrameId, Pose, Quaternion, Vec3};
use crate::recording::{write_episode, Episode, EpisodeHeader, RecordingError, SourceKind};
use crate::rng::SimRng;
use crate::simsource::{generate_stream, Interpolation, NoiseModel, ScriptedTrajectory, SimError, Waypoint};
use crate::streaming::{
    align_clock, encode_message, resample, tick_time, ClockError, ClockExchange, ClockModel, ClockProbe,
    EventCode, MessageReader, ProtocolMessage, ResampleConfig, ResampleError, Source, SourceStreams,
    StreamReadError, StreamSample, BUTTON_B, PROTOCOL_VERSION,
};
use crate::Micros;

/// Messages buffered between reader threads and the assembling consumer.
const CHANNEL_DEPTH: usize = 4096;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("NoHello: connection {connection} sent {message} before HELLO")]
    NoHello { connection: usize, message: &'static str },
    #[error("UnsupportedProtocol: connection {connection} speaks version {version}")]
    UnsupportedProtocol { connection: usize, version: u16 },
    #[error("SourceMismatch: connection {connection} is {bound:?} but sent a {sent:?} sample")]
    SourceMismatch {
        connection: usize,
        bound: Source,
        sent: Source,
    },
    #[error("NonIncreasingSeq: {stream:?} seq {seq} after {previous}")]
    NonIncreasingSeq { stream: Source, seq: u32, previous: u32 },
    #[error("NonMonotonicTime: {stream:?} device time {time} after {previous}")]
    NonMonotonicTime {
        stream: Source,
        time: Micros,
        previous: Micros,
    },
    #[error("ClockAlignment: {stream:?}: {error}")]
    Clock { stream: Source, error: ClockError },
    #[error("EventSource: {code:?} cannot come from {stream:?}")]
    EventSource { code: EventCode, stream: Source },
    #[error("UntrackedCalibration: {stream:?} has no tracked pose at {time} us")]
    Untracked { stream: Source, time: Micros },
    #[error("UnbalancedEpisodeMarkers: {0}")]
    UnbalancedMarkers(String),
    #[error("StreamRead: connection {connection}: {source}")]
    Stream {
        connection: usize,
        source: StreamReadError,
    },
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything a session needs besides the messages themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    pub task_name: String,
    pub operator_id: String,
    pub source_kind: SourceKind,
    pub extrinsics: ExtrinsicSet,
    pub placeholder: PlaceholderSpec,
    pub reset_mode: ResetMode,
    pub rate: f64,
    pub hold_limit: u32,
}

impl SessionOptions {
    pub fn from_config(cfg: &PipelineConfig, task_name: &str, operator_id: &str, kind: SourceKind) -> Self {
        SessionOptions {
            task_name: task_name.to_owned(),
            operator_id: operator_id.to_owned(),
            source_kind: kind,
            extrinsics: cfg.extrinsics.clone(),
            placeholder: cfg.placeholder,
            reset_mode: ResetMode::default(),
            rate: cfg.rate,
            hold_limit: cfg.hold_limit,
        }
    }
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self::from_config(&PipelineConfig::default(), "session", "operator", SourceKind::ActiveUmi)
    }
}

#[derive(Debug, Default)]
struct SourceLog {
    descriptor: Option<String>,
    samples: Vec<StreamSample>,
    exchanges: Vec<ClockExchange>,
    /// device time, code
    events: Vec<(Micros, EventCode)>,
}

/// A calibration event that could not be applied; the previous state stays
/// in force.
#[derive(Debug)]
pub struct RejectedCalibration {
    pub time: Micros,
    pub code: EventCode,
    pub error: PipelineError,
}

#[derive(Debug)]
pub struct SessionOutput {
    pub episodes: Vec<Episode>,
    /// Installed states, in time order.
    pub calibrations: Vec<CalibrationState>,
    pub rejected: Vec<RejectedCalibration>,
    pub clocks: [ClockModel; 3],
}

#[derive(Debug)]
pub struct SessionRecorder {
    opts: SessionOptions,
    logs: [SourceLog; 3],
    /// connection index -> bound source
    bindings: Vec<Option<Source>>,
}

fn msg_name(m: &ProtocolMessage) -> &'static str {
    match m {
        ProtocolMessage::Hello { .. } => "HELLO",
        ProtocolMessage::Sample(_) => "SAMPLE",
        ProtocolMessage::Event { .. } => "EVENT",
        ProtocolMessage::ClockPing(_) => "CLOCK_PING",
        ProtocolMessage::ClockPong(_) => "CLOCK_PONG",
        ProtocolMessage::Bye => "BYE",
    }
}

impl SessionRecorder {
    pub fn new(opts: SessionOptions) -> Self {
        SessionRecorder {
            opts,
            logs: Default::default(),
            bindings: Vec::new(),
        }
    }

    /// Feeds one message received on `connection`. A connection carries the
    /// source named by its most recent HELLO.
    pub fn ingest(&mut self, connection: usize, msg: ProtocolMessage) -> Result<(), PipelineError> {
        if self.bindings.len() <= connection {
            self.bindings.resize(connection + 1, None);
        }
        if let ProtocolMessage::Hello {
            proto_version,
            source,
            descriptor,
        } = &msg
        {
            if *proto_version != PROTOCOL_VERSION {
                return Err(PipelineError::UnsupportedProtocol {
                    connection,
                    version: *proto_version,
                });
            }
            self.bindings[connection] = Some(*source);
            self.logs[source.code() as usize].descriptor = Some(descriptor.clone());
            return Ok(());
        }
        let Some(bound) = self.bindings[connection] else {
            return Err(PipelineError::NoHello {
                connection,
                message: msg_name(&msg),
            });
        };
        let log = &mut self.logs[bound.code() as usize];
        match msg {
            ProtocolMessage::Sample(s) => {
                if s.source != bound {
                    return Err(PipelineError::SourceMismatch {
                        connection,
                        bound,
                        sent: s.source,
                    });
                }
                if let Some(prev) = log.samples.last() {
                    if s.seq <= prev.seq {
                        return Err(PipelineError::NonIncreasingSeq {
                            stream: bound,
                            seq: s.seq,
                            previous: prev.seq,
                        });
                    }
                    if s.device_time < prev.device_time {
                        return Err(PipelineError::NonMonotonicTime {
                            stream: bound,
                            time: s.device_time,
                            previous: prev.device_time,
                        });
                    }
                }
                log.samples.push(s);
            }
            ProtocolMessage::Event { code, device_time } => log.events.push((device_time, code)),
            ProtocolMessage::ClockPong(p) => log.exchanges.push(p.into()),
            // host-originated, nothing to learn from it
            ProtocolMessage::ClockPing(_) => {}
            ProtocolMessage::Bye => self.bindings[connection] = None,
            ProtocolMessage::Hello { .. } => unreachable!(),
        }
        Ok(())
    }

    /// Seals the session: aligns clocks, applies calibration events, cuts
    /// episodes and resamples them.
    pub fn finish(self) -> Result<SessionOutput, PipelineError> {
        let opts = self.opts;
        let mut clocks = [ClockModel { offset: 0, confidence: 0 }; 3];
        let mut streams = SourceStreams::default();
        // (pipeline time, source, arrival index, code)
        let mut events: Vec<(Micros, Source, usize, EventCode)> = Vec::new();
        for src in Source::ALL {
            let log = &self.logs[src.code() as usize];
            let clock = align_clock(&log.exchanges).map_err(|error| PipelineError::Clock { stream: src, error })?;
            clocks[src.code() as usize] = clock;
            *streams.get_mut(src) = log
                .samples
                .iter()
                .map(|s| StreamSample {
                    device_time: clock.to_pipeline(s.device_time),
                    ..*s
                })
                .collect();
            events.extend(
                log.events
                    .iter()
                    .enumerate()
                    .map(|(i, &(t, code))| (clock.to_pipeline(t), src, i, code)),
            );
        }
        events.sort();
        for src in Source::ALL {
            if streams.get(src).is_empty() {
                return Err(ResampleError::EmptyStream(src).into());
            }
        }
        let first = Source::ALL.iter().map(|&s| streams.get(s)[0].device_time).min().unwrap();
        let last = Source::ALL
            .iter()
            .map(|&s| streams.get(s).last().unwrap().device_time)
            .max()
            .unwrap();

        // calibration timeline
        let session = CalibrationSession::new();
        let mut calibrations = Vec::new();
        let mut rejected = Vec::new();
        for &(t, src, _, code) in &events {
            let state = match code {
                EventCode::ZERO_POINT_RESET => {
                    if !src.is_controller() {
                        return Err(PipelineError::EventSource { code, stream: src });
                    }
                    tip_at(&streams, &opts, t, src).map(|tip| reset_zero_point_with(&tip, t, opts.reset_mode))
                }
                EventCode::DOCK_CONFIRM => tip_at(&streams, &opts, t, Source::LeftController)
                    .and_then(|l| Ok((l, tip_at(&streams, &opts, t, Source::RightController)?)))
                    .and_then(|(l, r)| Ok(dock_calibrate(&l, &r, &opts.placeholder, t)?)),
                _ => continue,
            };
            match state {
                Ok(s) => {
                    session.install(s)?;
                    calibrations.push(s);
                }
                Err(error) => rejected.push(RejectedCalibration { time: t, code, error }),
            }
        }

        // episode segments
        let mut segments = Vec::new();
        let mut open: Option<Micros> = None;
        for &(t, _, _, code) in &events {
            match code {
                EventCode::EPISODE_START => {
                    if let Some(s) = open {
                        return Err(PipelineError::UnbalancedMarkers(format!(
                            "start at {t} us while the episode from {s} us is open"
                        )));
                    }
                    open = Some(t);
                }
                EventCode::EPISODE_STOP => {
                    let s = open.take().ok_or_else(|| {
                        PipelineError::UnbalancedMarkers(format!("stop at {t} us without a start"))
                    })?;
                    segments.push((s, t));
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            segments.push((s, last.max(s)));
        }
        if segments.is_empty() && !events.iter().any(|e| e.3 == EventCode::EPISODE_STOP) {
            segments.push((first, last));
        }

        let mut episodes = Vec::with_capacity(segments.len());
        for (i, &(start, stop)) in segments.iter().enumerate() {
            let calibration = calibrations
                .iter()
                .rev()
                .find(|c| c.established_at <= start)
                .or_else(|| calibrations.iter().find(|c| c.established_at <= stop))
                .copied()
                .unwrap_or_else(CalibrationState::identity);
            let seg_events: Vec<(Micros, EventCode)> = events
                .iter()
                .filter(|e| e.0 >= start && e.0 <= stop)
                .map(|e| (e.0, e.3))
                .collect();
            let cfg = ResampleConfig {
                rate: opts.rate,
                hold_limit: opts.hold_limit,
                origin: start,
                end: Some(stop),
            };
            let frames = resample(&streams, &calibration, &opts.extrinsics, &seg_events, &cfg)?.frames;
            let mut header = EpisodeHeader::new(opts.task_name.clone(), opts.operator_id.clone(), opts.source_kind);
            header.rate = opts.rate;
            header.calibration = calibration;
            header.extrinsics = opts.extrinsics.clone();
            header.created_at = start;
            header.metadata.insert("segment".into(), i.to_string());
            for src in Source::ALL {
                let log = &self.logs[src.code() as usize];
                if let Some(d) = &log.descriptor {
                    let clean: String = d.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
                    header.metadata.insert(format!("device.{}", src.name()), clean);
                }
                header.metadata.insert(
                    format!("clock_offset_us.{}", src.name()),
                    clocks[src.code() as usize].offset.to_string(),
                );
            }
            episodes.push(Episode::new(header, frames));
        }
        Ok(SessionOutput {
            episodes,
            calibrations,
            rejected,
            clocks,
        })
    }
}

/// Uncalibrated tip pose of a controller at pipeline time `t`.
fn tip_at(streams: &SourceStreams, opts: &SessionOptions, t: Micros, src: Source) -> Result<Pose, PipelineError> {
    let cfg = ResampleConfig {
        rate: opts.rate,
        hold_limit: opts.hold_limit,
        origin: t,
        end: Some(t),
    };
    let r = resample(streams, &CalibrationState::identity(), &opts.extrinsics, &[], &cfg)?;
    let frame = &r.frames[0];
    if !frame.is_valid(src) {
        return Err(PipelineError::Untracked { stream: src, time: t });
    }
    Ok(*frame.pose(src))
}

/// Runs a session over independent byte streams, one reader thread each.
/// The consumer sees messages in arrival order; output does not depend on
/// how the threads interleave.
pub fn record_streams<R: Read + Send>(inputs: Vec<R>, opts: SessionOptions) -> Result<SessionOutput, PipelineError> {
    thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<ProtocolMessage, StreamReadError>)>(CHANNEL_DEPTH);
        for (i, input) in inputs.into_iter().enumerate() {
            let tx = tx.clone();
            scope.spawn(move || {
                let mut reader = MessageReader::new(input);
                loop {
                    let item = match reader.next_message() {
                        Ok(Some(m)) => Ok(m),
                        Ok(None) => break,
                        Err(e) => Err(e),
                    };
                    let stop = !matches!(item, Ok(ref m) if *m != ProtocolMessage::Bye);
                    if tx.send((i, item)).is_err() || stop {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut rec = SessionRecorder::new(opts);
        for (connection, item) in rx {
            let msg = item.map_err(|source| PipelineError::Stream { connection, source })?;
            rec.ingest(connection, msg)?;
        }
        rec.finish()
    })
}

/// Writes `<dir>/<task>_<NNNN>.aumi` for each episode.
pub fn write_episodes(dir: &Path, episodes: &[Episode]) -> Result<Vec<PathBuf>, PipelineError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| PipelineError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut paths = Vec::with_capacity(episodes.len());
    for (i, ep) in episodes.iter().enumerate() {
        let name: String = ep
            .header
            .task_name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{name}_{i:04}.aumi"));
        let bytes = ep.to_bytes()?;
        std::fs::write(&path, bytes).map_err(io(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Writes one episode to any sink; convenience re-export for callers that
/// already hold a file.
pub fn write_episode_to<W: std::io::Write>(ep: &Episode, sink: &mut W) -> Result<u64, PipelineError> {
    Ok(write_episode(ep, sink)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureCalibration {
    /// Left controller presses B with its tip at the world origin.
    ZeroPoint,
    /// Both tips rest in the placeholder dock.
    Dock,
}

/// A scripted capture session: a calibration phase, then `episodes`
/// recordings of random bimanual motion separated by idle gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureScenario {
    pub seed: u64,
    pub episodes: usize,
    /// seconds
    pub episode_duration: f64,
    /// seconds between episodes
    pub gap: f64,
    /// seconds before the first episode; the calibration event fires halfway
    pub lead: f64,
    /// tracker Hz
    pub sample_rate: f64,
    pub calibration: CaptureCalibration,
    pub translational_sigma: f64,
    pub rotational_sigma: f64,
    /// Host clock at session time zero, microseconds.
    pub host_epoch: Micros,
}

impl Default for CaptureScenario {
    fn default() -> Self {
        CaptureScenario {
            seed: 0,
            episodes: 2,
            episode_duration: 4.0,
            gap: 0.5,
            lead: 0.5,
            sample_rate: 90.0,
            calibration: CaptureCalibration::Dock,
            translational_sigma: 0.0,
            rotational_sigma: 0.0,
            host_epoch: SIM_HOST_EPOCH,
        }
    }
}

/// 2025-01-01T00:00:00Z in microseconds; simulated sessions start here so
/// output never depends on the wall clock.
pub const SIM_HOST_EPOCH: Micros = 1_735_689_600_000_000;

const CAPTURE_STREAM: u64 = 0x6361_7074;
const CLOCK_PROBES: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCapture {
    /// Message sequence per source, indexed by [`Source::code`].
    pub streams: [Vec<ProtocolMessage>; 3],
    /// Ground truth the calibration should recover.
    pub world_from_tracking: Pose,
    /// Session-relative seconds of each episode's start and stop.
    pub episode_spans: Vec<(f64, f64)>,
}

impl SimulatedCapture {
    pub fn encode(&self, src: Source) -> Vec<u8> {
        self.streams[src.code() as usize].iter().flat_map(encode_message).collect()
    }
}

impl CaptureScenario {
    pub fn span(&self) -> f64 {
        self.lead + self.episodes as f64 * (self.episode_duration + self.gap)
    }
}

fn random_rotation(rng: &mut SimRng, max_angle: f64) -> Quaternion {
    let axis = rng.unit_vector();
    Quaternion::from_axis_angle(&axis, max_angle * (2.0 * rng.uniform() - 1.0))
}

fn jitter(rng: &mut SimRng, base: Vec3, radius: f64) -> Vec3 {
    base + Vec3::new(
        radius * (2.0 * rng.uniform() - 1.0),
        radius * (2.0 * rng.uniform() - 1.0),
        radius * (2.0 * rng.uniform() - 1.0),
    )
}

/// Builds the three device streams of a scripted session.
///
/// The tracking frame sits at a seeded yaw and offset from the world, and
/// each device clock runs at a seeded offset from the host, so the
/// recorder has both to recover.
pub fn simulate_capture(
    sc: &CaptureScenario,
    extrinsics: &ExtrinsicSet,
    placeholder: &PlaceholderSpec,
) -> Result<SimulatedCapture, PipelineError> {
    let mut rng = SimRng::new(sc.seed, CAPTURE_STREAM);
    let yaw = std::f64::consts::PI * (2.0 * rng.uniform() - 1.0);
    let tracking_from_world = Pose::new(
        jitter(&mut rng, Vec3::zeros(), 1.0),
        Quaternion::from_axis_angle(&Vec3::z(), yaw),
    );
    let span = sc.span();

    // world-frame tip and head waypoints
    let (left_rest, right_rest) = match sc.calibration {
        CaptureCalibration::Dock => (placeholder.left_dock_in_world, placeholder.right_dock_in_world),
        CaptureCalibration::ZeroPoint => (Pose::IDENTITY, Pose::from_translation(0.3, 0.0, 0.0)),
    };
    let head_rest = Pose::from_translation(0.0, -0.3, 0.45);
    let mut times = vec![0.0, sc.lead];
    let mut t = sc.lead;
    while t + 0.5 < span - 1e-9 {
        t += 0.5;
        times.push(t);
    }
    if span > sc.lead + 1e-9 {
        times.push(span);
    }
    let mut left_w = Vec::new();
    let mut right_w = Vec::new();
    let mut head_w = Vec::new();
    for (k, &time) in times.iter().enumerate() {
        let (l, r, h, lw, rw) = if k < 2 {
            (left_rest, right_rest, head_rest, 0.08, 0.08)
        } else {
            let l = Pose::new(jitter(&mut rng, Vec3::new(-0.15, 0.35, 0.1), 0.05), random_rotation(&mut rng, 0.3));
            let r = Pose::new(jitter(&mut rng, Vec3::new(0.15, 0.35, 0.1), 0.05), random_rotation(&mut rng, 0.3));
            let h = Pose::new(jitter(&mut rng, Vec3::new(0.0, -0.3, 0.45), 0.03), random_rotation(&mut rng, 0.2));
            (l, r, h, 0.08 * rng.uniform(), 0.08 * rng.uniform())
        };
        left_w.push((time, l, lw));
        right_w.push((time, r, rw));
        head_w.push((time, h, 0.0));
    }

    let to_raw = |tip: FrameId, pts: &[(f64, Pose, f64)]| -> Result<ScriptedTrajectory, PipelineError> {
        let ext_inv = match tip {
            FrameId::Head => Pose::IDENTITY,
            _ => inverse(&extrinsics.tip(tip).map_err(SimError::from)?.transform),
        };
        let wps = pts
            .iter()
            .map(|&(time, pose, gripper_width)| Waypoint {
                time,
                pose: compose(&compose(&tracking_from_world, &pose), &ext_inv),
                gripper_width,
            })
            .collect();
        Ok(ScriptedTrajectory::new(wps, Interpolation::LinearSlerp)?)
    };
    let trajs = [
        to_raw(FrameId::LeftTip, &left_w)?,
        to_raw(FrameId::RightTip, &right_w)?,
        to_raw(FrameId::Head, &head_w)?,
    ];

    let event_rel = (sc.lead * 0.5 * 1e6).round() as Micros;
    let mut episode_spans = Vec::with_capacity(sc.episodes);
    let mut markers = Vec::new();
    for i in 0..sc.episodes {
        let s = sc.lead + i as f64 * (sc.episode_duration + sc.gap);
        let e = s + sc.episode_duration;
        episode_spans.push((s, e));
        markers.push(((s * 1e6).round() as Micros, EventCode::EPISODE_START));
        markers.push(((e * 1e6).round() as Micros, EventCode::EPISODE_STOP));
    }
    let calib_code = match sc.calibration {
        CaptureCalibration::Dock => EventCode::DOCK_CONFIRM,
        CaptureCalibration::ZeroPoint => EventCode::ZERO_POINT_RESET,
    };

    let mut streams: [Vec<ProtocolMessage>; 3] = Default::default();
    for src in Source::ALL {
        let device_base: Micros = 1_000_000_000 * (src.code() as Micros + 1) + rng.below(1_000_000);
        let to_device = |rel: Micros| rel + device_base;
        let out = &mut streams[src.code() as usize];
        out.push(ProtocolMessage::Hello {
            proto_version: PROTOCOL_VERSION,
            source: src,
            descriptor: format!("sim-{}", src.name()),
        });
        for p in 0..CLOCK_PROBES {
            let host_send = sc.host_epoch - 100_000 + p as Micros * 10_000;
            let delay = 200 + rng.below(600);
            let probe = ClockProbe {
                probe_id: p,
                host_send,
                device: host_send + delay + device_base - sc.host_epoch,
                host_recv: host_send + 2 * delay,
            };
            out.push(ProtocolMessage::ClockPing(ClockProbe {
                device: 0,
                host_recv: 0,
                ..probe
            }));
            out.push(ProtocolMessage::ClockPong(probe));
        }
        let noise = NoiseModel {
            translational_sigma: sc.translational_sigma,
            rotational_sigma: sc.rotational_sigma,
            ..NoiseModel::zero(sc.seed)
        };
        let samples = generate_stream(&trajs[src.code() as usize], &noise, sc.sample_rate, span, src)?;
        let mut events: Vec<(Micros, EventCode)> = Vec::new();
        if src == Source::LeftController {
            events.push((event_rel, calib_code));
            events.extend(markers.iter().copied());
        }
        let mut ev = events.iter().peekable();
        for mut s in samples {
            while let Some(&&(t, code)) = ev.peek() {
                if t > s.device_time {
                    break;
                }
                out.push(ProtocolMessage::Event {
                    code,
                    device_time: to_device(t),
                });
                ev.next();
            }
            if src == Source::LeftController
                && calib_code == EventCode::ZERO_POINT_RESET
                && s.device_time >= event_rel
                && s.device_time < event_rel + 100_000
            {
                s.buttons |= BUTTON_B;
            }
            s.device_time = to_device(s.device_time);
            out.push(ProtocolMessage::Sample(s));
        }
        for &(t, code) in ev {
            out.push(ProtocolMessage::Event {
                code,
                device_time: to_device(t),
            });
        }
        out.push(ProtocolMessage::Bye);
    }
    Ok(SimulatedCapture {
        streams,
        world_from_tracking: inverse(&tracking_from_world),
        episode_spans,
    })
}

/// Session-relative grid time of the tracker's `k`-th sample.
pub fn capture_sample_time(sc: &CaptureScenario, k: u64) -> Micros {
    tick_time(k, sc.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose_distance;
    use crate::streaming::ALL_VALID;

    fn run(sc: &CaptureScenario) -> (SimulatedCapture, SessionOutput) {
        let cap = simulate_capture(sc, &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
        let inputs: Vec<Vec<u8>> = Source::ALL.iter().map(|&s| cap.encode(s)).collect();
        let out = record_streams(inputs.iter().map(|b| b.as_slice()).collect(), SessionOptions::default()).unwrap();
        (cap, out)
    }

    #[test]
    fn dock_session_recovers_world() {
        let (cap, out) = run(&CaptureScenario::default());
        assert_eq!(out.calibrations.len(), 1);
        assert!(out.rejected.is_empty());
        let d = pose_distance(&out.calibrations[0].world_from_tracking, &cap.world_from_tracking);
        assert!(d.translational < 1e-9 && d.angular < 1e-9, "{d:?}");
        assert_eq!(out.episodes.len(), 2);
        for ep in &out.episodes {
            assert_eq!(ep.frames.len(), 121);
            assert!(ep.frames.iter().all(|f| f.validity == ALL_VALID));
            assert_eq!(ep.frames[0].events, vec![EventCode::EPISODE_START]);
            assert_eq!(ep.frames[120].events, vec![EventCode::EPISODE_STOP]);
        }
        for (src, clock) in Source::ALL.iter().zip(out.clocks) {
            assert_eq!(clock.confidence, CLOCK_PROBES as usize, "{src:?}");
        }
    }

    #[test]
    fn zero_point_session_puts_left_tip_at_origin() {
        let sc = CaptureScenario {
            calibration: CaptureCalibration::ZeroPoint,
            episodes: 1,
            ..Default::default()
        };
        let (cap, out) = run(&sc);
        let d = pose_distance(&out.calibrations[0].world_from_tracking, &cap.world_from_tracking);
        assert!(d.translational < 1e-9 && d.angular < 1e-9, "{d:?}");
    }

    #[test]
    fn interleaving_does_not_matter() {
        let sc = CaptureScenario::default();
        let cap = simulate_capture(&sc, &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
        let mut a = SessionRecorder::new(SessionOptions::default());
        for src in Source::ALL {
            for m in &cap.streams[src.code() as usize] {
                a.ingest(src.code() as usize, m.clone()).unwrap();
            }
        }
        let mut b = SessionRecorder::new(SessionOptions::default());
        let longest = cap.streams.iter().map(Vec::len).max().unwrap();
        for i in 0..longest {
            for src in Source::ALL.iter().rev() {
                if let Some(m) = cap.streams[src.code() as usize].get(i) {
                    b.ingest(src.code() as usize + 7, m.clone()).unwrap();
                }
            }
        }
        let ea = a.finish().unwrap().episodes;
        let eb = b.finish().unwrap().episodes;
        assert_eq!(ea.len(), eb.len());
        for (x, y) in ea.iter().zip(&eb) {
            assert_eq!(x.to_bytes().unwrap(), y.to_bytes().unwrap());
        }
    }

    #[test]
    fn ingest_checks() {
        let mut r = SessionRecorder::new(SessionOptions::default());
        assert!(matches!(r.ingest(0, ProtocolMessage::Bye), Err(PipelineError::NoHello { .. })));
        r.ingest(
            0,
            ProtocolMessage::Hello {
                proto_version: PROTOCOL_VERSION,
                source: Source::Hmd,
                descriptor: String::new(),
            },
        )
        .unwrap();
        let s = StreamSample {
            source: Source::Hmd,
            seq: 5,
            device_time: 100,
            pose: Pose::IDENTITY,
            gripper_width: None,
            buttons: 0,
            flags: 0,
        };
        r.ingest(0, ProtocolMessage::Sample(s.clone())).unwrap();
        assert!(matches!(
            r.ingest(0, ProtocolMessage::Sample(StreamSample { device_time: 200, ..s.clone() })),
            Err(PipelineError::NonIncreasingSeq { .. })
        ));
        assert!(matches!(
            r.ingest(0, ProtocolMessage::Sample(StreamSample { seq: 6, device_time: 99, ..s.clone() })),
            Err(PipelineError::NonMonotonicTime { .. })
        ));
        assert!(matches!(
            r.ingest(
                0,
                ProtocolMessage::Sample(StreamSample {
                    source: Source::LeftController,
                    seq: 6,
                    ..s
                })
            ),
            Err(PipelineError::SourceMismatch { .. })
        ));
    }

    #[test]
    fn missing_clock_probes_fail() {
        let sc = CaptureScenario::default();
        let mut cap = simulate_capture(&sc, &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
        cap.streams[2].retain(|m| !matches!(m, ProtocolMessage::ClockPong(_)));
        let mut r = SessionRecorder::new(SessionOptions::default());
        for src in Source::ALL {
            for m in &cap.streams[src.code() as usize] {
                r.ingest(src.code() as usize, m.clone()).unwrap();
            }
        }
        assert!(matches!(
            r.finish().unwrap_err(),
            PipelineError::Clock { stream: Source::Hmd, .. }
        ));
    }

    #[test]
    fn truncated_stream_reports_connection() {
        let sc = CaptureScenario::default();
        let cap = simulate_capture(&sc, &ExtrinsicSet::default(), &PlaceholderSpec::default()).unwrap();
        let mut bytes: Vec<Vec<u8>> = Source::ALL.iter().map(|&s| cap.encode(s)).collect();
        let n = bytes[1].len();
        bytes[1].truncate(n - 3);
        let err = record_streams(bytes.iter().map(|b| b.as_slice()).collect(), SessionOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Stream { connection: 1, .. }), "{err}");
    }
}
