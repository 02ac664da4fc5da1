//! Replay of recorded pose sequences and replay-fidelity metrics.
//!
//! For a tape-measure trial with nominal span `L_measure` and replayed span
//! `L_replay`:
//!
//! ```text
//! ΔL  = |L_replay − L_measure|
//! RPE = ΔL / L_measure × 100 %
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{pose_distance, Pose, Vec3};
use crate::recording::{validate_episode, Diagnostic, Episode, EpisodeHeader, ValidationLimits};
use crate::rng::SimRng;
use crate::streaming::{EventCode, Source, SyncedFrame};
use crate::Micros;

/// Frames in the end-of-episode window used for the replayed span.
pub const STABLE_WINDOW: usize = 15;
/// Largest separation spread tolerated inside the window, meters.
pub const MAX_STABLE_SPREAD: f64 = 0.002;

/// 100 cm down to 10 cm in 10 cm steps.
pub fn tape_measure_nominals() -> Vec<f64> {
    (1..=10).rev().map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("InvalidChannel: frame {frame}: {channel} tip is not valid")]
    InvalidChannel { frame: u64, channel: &'static str },
    #[error("InvalidTrial: nominal {nominal} m, replay {replay} m")]
    InvalidTrial { nominal: f64, replay: f64 },
    #[error("MissingNominal: no trial for {0} m")]
    MissingNominal(f64),
    #[error("UnstableEnd: nominal {nominal} m, final-window spread {spread} m")]
    UnstableEnd { nominal: f64, spread: f64 },
    #[error("ShortEpisode: nominal {nominal} m has {frames} frames, window needs {STABLE_WINDOW}")]
    ShortEpisode { nominal: f64, frames: usize },
    #[error("ValidationFailed: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    ValidationFailed(Vec<Diagnostic>),
    #[error("InvalidDuration: {task}/{method:?}: {duration} s")]
    InvalidDuration {
        task: String,
        method: CollectionMethod,
        duration: f64,
    },
    #[error("MissingBaseline: task {0:?} has no bare_hand record")]
    MissingBaseline(String),
    #[error("ReportParse: line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Distance between the two gripper tips, meters.
pub fn gripper_separation(frame: &SyncedFrame) -> Result<f64, EvalError> {
    for (src, channel) in [(Source::LeftController, "left"), (Source::RightController, "right")] {
        if !frame.is_valid(src) {
            return Err(EvalError::InvalidChannel {
                frame: frame.index,
                channel,
            });
        }
    }
    Ok(pose_distance(&frame.left_tip, &frame.right_tip).translational)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpeTrial {
    /// meters
    pub nominal_distance: f64,
    /// meters
    pub replay_distance: f64,
}

impl RpeTrial {
    pub fn new(nominal_distance: f64, replay_distance: f64) -> Result<Self, EvalError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(nominal_distance) || !ok(replay_distance) {
            return Err(EvalError::InvalidTrial {
                nominal: nominal_distance,
                replay: replay_distance,
            });
        }
        Ok(RpeTrial {
            nominal_distance,
            replay_distance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpeResult {
    /// meters
    pub delta_l: f64,
    /// percent
    pub rpe: f64,
}

pub fn compute_rpe(trial: &RpeTrial) -> RpeResult {
    let delta_l = (trial.replay_distance - trial.nominal_distance).abs();
    RpeResult {
        delta_l,
        rpe: delta_l / trial.nominal_distance * 100.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialRow {
    pub nominal: f64,
    pub replay: f64,
    pub delta_l: f64,
    pub rpe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeReport {
    /// Ordered by nominal distance, longest first.
    pub trials: Vec<TrialRow>,
    /// percent
    pub mean_rpe: f64,
}

impl RpeReport {
    pub fn from_trials(trials: &[RpeTrial]) -> Self {
        let mut rows: Vec<TrialRow> = trials
            .iter()
            .map(|t| {
                let r = compute_rpe(t);
                TrialRow {
                    nominal: t.nominal_distance,
                    replay: t.replay_distance,
                    delta_l: r.delta_l,
                    rpe: r.rpe,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.nominal.total_cmp(&a.nominal));
        let mean_rpe = if rows.is_empty() {
            0.0
        } else {
            rows.iter().map(|r| r.rpe).sum::<f64>() / rows.len() as f64
        };
        RpeReport {
            trials: rows,
            mean_rpe,
        }
    }

    /// `nominal_m \t replay_m \t delta_m \t rpe_pct` per trial, then `mean \t pct`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            writeln!(s, "{}\t{}\t{}\t{}", t.nominal, t.replay, t.delta_l, t.rpe).unwrap();
        }
        writeln!(s, "mean\t{}", self.mean_rpe).unwrap();
        s
    }

    pub fn parse_tsv(text: &str) -> Result<Self, EvalError> {
        let err = |line: usize, message: String| EvalError::Parse { line, message };
        let mut trials = Vec::new();
        let mut mean = None;
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(i + 1, format!("number {s:?}")));
            match cols.as_slice() {
                ["mean", v] => mean = Some(num(v)?),
                [a, b, c, d] => trials.push(TrialRow {
                    nominal: num(a)?,
                    replay: num(b)?,
                    delta_l: num(c)?,
                    rpe: num(d)?,
                }),
                _ => return Err(err(i + 1, format!("unexpected line {line:?}"))),
            }
        }
        Ok(RpeReport {
            trials,
            mean_rpe: mean.ok_or_else(|| err(0, "missing mean line".into()))?,
        })
    }
}

/// One timed command for a bimanual robot with an active head camera.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseCommand {
    pub time: Micros,
    pub left_tip: Pose,
    pub right_tip: Pose,
    pub head: Pose,
    pub left_width: f64,
    pub right_width: f64,
    pub validity: u8,
    pub events: Vec<EventCode>,
}

impl PoseCommand {
    pub fn separation(&self) -> f64 {
        (self.left_tip.translation - self.right_tip.translation).norm()
    }
}

/// Re-projects a validated episode into robot commands, one per frame.
pub fn extract_command_stream(ep: &Episode, limits: &ValidationLimits) -> Result<Vec<PoseCommand>, EvalError> {
    let blocking: Vec<Diagnostic> = validate_episode(ep, limits)
        .into_iter()
        .filter(|d| d.kind.is_structural())
        .collect();
    if !blocking.is_empty() {
        return Err(EvalError::ValidationFailed(blocking));
    }
    Ok(ep
        .frames
        .iter()
        .map(|f| PoseCommand {
            time: f.timeline_time,
            left_tip: f.left_tip,
            right_tip: f.right_tip,
            head: f.head,
            left_width: f.left_width,
            right_width: f.right_width,
            validity: f.validity,
            events: f.events.clone(),
        })
        .collect())
}

/// Inverse of [`extract_command_stream`]: commands become frames again.
pub fn record_command_stream(header: EpisodeHeader, commands: &[PoseCommand]) -> Episode {
    let frames = commands
        .iter()
        .enumerate()
        .map(|(i, c)| SyncedFrame {
            index: i as u64,
            timeline_time: c.time,
            left_tip: c.left_tip,
            right_tip: c.right_tip,
            head: c.head,
            left_width: c.left_width,
            right_width: c.right_width,
            validity: c.validity,
            events: c.events.clone(),
        })
        .collect();
    Episode::new(header, frames)
}

/// Executes a command stream and returns what the robot actually did.
pub trait Replayer {
    fn execute(&mut self, commands: &[PoseCommand]) -> Vec<PoseCommand>;
}

/// Perfect execution.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReplayer;

impl Replayer for IdentityReplayer {
    fn execute(&mut self, commands: &[PoseCommand]) -> Vec<PoseCommand> {
        commands.to_vec()
    }
}

/// Widens the gripper separation by a fixed amount: the right tip moves
/// away from the left along their connecting line.
#[derive(Debug, Clone, Copy)]
pub struct BiasReplayer {
    /// meters
    pub bias: f64,
}

impl Replayer for BiasReplayer {
    fn execute(&mut self, commands: &[PoseCommand]) -> Vec<PoseCommand> {
        commands
            .iter()
            .map(|c| {
                let mut out = c.clone();
                let d = c.right_tip.translation - c.left_tip.translation;
                let n = d.norm();
                let dir = if n > 0.0 { d / n } else { Vec3::x() };
                out.right_tip.translation += dir * self.bias;
                out
            })
            .collect()
    }
}

/// Per-replay execution error: each call draws one Gaussian offset per axis
/// for each tip and applies it to the whole replay.
#[derive(Debug, Clone)]
pub struct NoiseReplayer {
    /// meters, per axis
    pub sigma: f64,
    rng: SimRng,
}

impl NoiseReplayer {
    pub fn new(sigma: f64, seed: u64) -> Self {
        NoiseReplayer {
            sigma,
            rng: SimRng::new(seed, 0x7265_706c),
        }
    }
}

impl Replayer for NoiseReplayer {
    fn execute(&mut self, commands: &[PoseCommand]) -> Vec<PoseCommand> {
        let mut draw = || Vec3::new(self.rng.gaussian(), self.rng.gaussian(), self.rng.gaussian()) * self.sigma;
        let left = draw();
        let right = draw();
        commands
            .iter()
            .map(|c| {
                let mut out = c.clone();
                out.left_tip.translation += left;
                out.right_tip.translation += right;
                out
            })
            .collect()
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    /// Nominal spans that must all be present, meters.
    pub required_nominals: Vec<f64>,
    pub window: usize,
    pub max_spread: f64,
    pub limits: ValidationLimits,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            required_nominals: tape_measure_nominals(),
            window: STABLE_WINDOW,
            max_spread: MAX_STABLE_SPREAD,
            limits: ValidationLimits::default(),
        }
    }
}

/// Replays one trial and measures the final span: median separation over
/// the last `window` executed commands.
pub fn replay_distance(
    nominal: f64,
    ep: &Episode,
    replayer: &mut dyn Replayer,
    opts: &ProtocolOptions,
) -> Result<f64, EvalError> {
    let commands = extract_command_stream(ep, &opts.limits)?;
    if commands.len() < opts.window || opts.window == 0 {
        return Err(EvalError::ShortEpisode {
            nominal,
            frames: commands.len(),
        });
    }
    let executed = replayer.execute(&commands);
    let tail = &executed[executed.len() - opts.window..];
    let mut seps = Vec::with_capacity(tail.len());
    for (k, c) in tail.iter().enumerate() {
        for (src, channel) in [(Source::LeftController, "left"), (Source::RightController, "right")] {
            if c.validity & src.validity_bit() == 0 {
                return Err(EvalError::InvalidChannel {
                    frame: (executed.len() - opts.window + k) as u64,
                    channel,
                });
            }
        }
        seps.push(c.separation());
    }
    let lo = seps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = seps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo > opts.max_spread {
        return Err(EvalError::UnstableEnd {
            nominal,
            spread: hi - lo,
        });
    }
    Ok(median(&mut seps))
}

/// Tape-measure replay-fidelity protocol over `(nominal, episode)` pairs.
pub fn tape_measure_protocol(
    episodes: &[(f64, Episode)],
    replayer: &mut dyn Replayer,
    opts: &ProtocolOptions,
) -> Result<RpeReport, EvalError> {
    for &want in &opts.required_nominals {
        if !episodes.iter().any(|(n, _)| (n - want).abs() < 1e-9) {
            return Err(EvalError::MissingNominal(want));
        }
    }
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by(|&a, &b| episodes[b].0.total_cmp(&episodes[a].0));
    let mut trials = Vec::with_capacity(episodes.len());
    for i in order {
        let (nominal, ep) = &episodes[i];
        let replay = replay_distance(*nominal, ep, replayer, opts)?;
        trials.push(RpeTrial::new(*nominal, replay)?);
    }
    Ok(RpeReport::from_trials(&trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollectionMethod {
    BareHand,
    ActiveUmi,
    Teleoperation,
}

impl CollectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            CollectionMethod::BareHand => "bare_hand",
            CollectionMethod::ActiveUmi => "activeumi",
            CollectionMethod::Teleoperation => "teleoperation",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "bare_hand" => Some(Self::BareHand),
            "activeumi" => Some(Self::ActiveUmi),
            "teleoperation" => Some(Self::Teleoperation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputRecord {
    pub method: CollectionMethod,
    pub task: String,
    /// seconds
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowdownRow {
    pub task: String,
    pub method: CollectionMethod,
    /// mean duration over mean bare-hand duration
    pub ratio: f64,
}

/// Per task and method: mean duration divided by the mean bare-hand duration.
pub fn slowdown_report(records: &[ThroughputRecord]) -> Result<Vec<SlowdownRow>, EvalError> {
    let mut cells: BTreeMap<(&str, CollectionMethod), (f64, usize)> = BTreeMap::new();
    for r in records {
        if !(r.duration.is_finite() && r.duration > 0.0) {
            return Err(EvalError::InvalidDuration {
                task: r.task.clone(),
                method: r.method,
                duration: r.duration,
            });
        }
        let c = cells.entry((r.task.as_str(), r.method)).or_insert((0.0, 0));
        c.0 += r.duration;
        c.1 += 1;
    }
    let mean = |(sum, n): (f64, usize)| sum / n as f64;
    let mut rows = Vec::new();
    for (&(task, method), &cell) in &cells {
        let base = cells
            .get(&(task, CollectionMethod::BareHand))
            .ok_or_else(|| EvalError::MissingBaseline(task.to_owned()))?;
        rows.push(SlowdownRow {
            task: task.to_owned(),
            method,
            ratio: mean(cell) / mean(*base),
        });
    }
    Ok(rows)
}
