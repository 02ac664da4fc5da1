//! Deterministic simulated tracker.
//!
//! Produces controller and headset sample streams from scripted
//! trajectories, with seeded Gaussian pose noise, latency, timestamp jitter
//! and linear drift. Every output is a pure function of its arguments.

use thiserror::Error;

use crate::calibration::{CalibrationState, PlaceholderSpec};
use crate::geometry::{compose, inverse, ExtrinsicSet, FrameId, GeometryError, Pose, Quaternion, Vec3};
use crate::recording::{Episode, EpisodeHeader, SourceKind};
use crate::rng::SimRng;
use crate::streaming::{resample, tick_time, ResampleConfig, ResampleError, Source, SourceStreams, StreamSample};
use crate::Micros;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("InvalidTrajectory: {0}")]
    InvalidTrajectory(String),
    #[error("DurationExceedsTrajectory: {duration} s requested, trajectory spans {span} s")]
    DurationExceedsTrajectory { duration: f64, span: f64 },
    #[error("InvalidNoise: {0}")]
    InvalidNoise(String),
    #[error("WaypointParse: line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("InvalidNominal: {0}")]
    InvalidNominal(f64),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// meters, per axis
    pub translational_sigma: f64,
    /// radians, rotation angle about a uniformly random axis
    pub rotational_sigma: f64,
    /// microseconds added to every device timestamp
    pub latency: Micros,
    /// microseconds
    pub jitter_sigma: f64,
    /// meters per second along a seeded fixed direction
    pub drift_rate: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn zero(seed: u64) -> Self {
        NoiseModel {
            translational_sigma: 0.0,
            rotational_sigma: 0.0,
            latency: 0,
            jitter_sigma: 0.0,
            drift_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.translational_sigma) || !ok(self.rotational_sigma) || !ok(self.jitter_sigma) || !ok(self.drift_rate) {
            return Err(SimError::InvalidNoise(format!("{self:?}")));
        }
        Ok(())
    }

    fn with_seed(&self, seed: u64) -> Self {
        NoiseModel { seed, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    LinearSlerp,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    /// seconds
    pub time: f64,
    pub pose: Pose,
    /// meters
    pub gripper_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedTrajectory {
    waypoints: Vec<Waypoint>,
    pub interpolation: Interpolation,
    /// `[start, end)` intervals, seconds, during which samples are flagged
    /// tracking-lost.
    pub tracking_lost: Vec<(f64, f64)>,
}

impl ScriptedTrajectory {
    pub fn new(waypoints: Vec<Waypoint>, interpolation: Interpolation) -> Result<Self, SimError> {
        let first = waypoints
            .first()
            .ok_or_else(|| SimError::InvalidTrajectory("no waypoints".into()))?;
        if first.time != 0.0 {
            return Err(SimError::InvalidTrajectory(format!("first waypoint at {} s, must be 0", first.time)));
        }
        for w in waypoints.windows(2) {
            // negated so NaN times are refused too
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(w[1].time > w[0].time) {
                return Err(SimError::InvalidTrajectory(format!(
                    "times not strictly increasing at {} s",
                    w[1].time
                )));
            }
        }
        if waypoints.iter().any(|w| !w.pose.is_finite() || !w.gripper_width.is_finite()) {
            return Err(SimError::InvalidTrajectory("non-finite waypoint".into()));
        }
        Ok(ScriptedTrajectory {
            waypoints,
            interpolation,
            tracking_lost: Vec::new(),
        })
    }

    /// A single pose held for `duration` seconds.
    pub fn stationary(pose: Pose, gripper_width: f64, duration: f64) -> Self {
        let mut w = vec![Waypoint {
            time: 0.0,
            pose,
            gripper_width,
        }];
        if duration > 0.0 {
            w.push(Waypoint {
                time: duration,
                pose,
                gripper_width,
            });
        }
        Self::new(w, Interpolation::LinearSlerp).expect("valid stationary trajectory")
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn span(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    /// Pose and width at `t` seconds, clamped to the scripted span.
    pub fn sample(&self, t: f64) -> (Pose, f64) {
        let w = &self.waypoints;
        let after = w.partition_point(|p| p.time <= t);
        if after == 0 {
            return (w[0].pose, w[0].gripper_width);
        }
        let a = &w[after - 1];
        let Some(b) = w.get(after) else {
            return (a.pose, a.gripper_width);
        };
        if self.interpolation == Interpolation::Hold || t == a.time {
            return (a.pose, a.gripper_width);
        }
        let s = (t - a.time) / (b.time - a.time);
        let pose = Pose::new(
            a.pose.translation + (b.pose.translation - a.pose.translation) * s,
            a.pose.rotation.slerp(&b.pose.rotation, s),
        );
        (pose, a.gripper_width + (b.gripper_width - a.gripper_width) * s)
    }

    fn lost_at(&self, t: f64) -> bool {
        self.tracking_lost.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Parses `t_s tx ty tz qw qx qy qz width` lines; `#` starts a comment.
    pub fn parse_waypoints(text: &str, interpolation: Interpolation) -> Result<Self, SimError> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let nums: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| SimError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if nums.len() != 9 {
                return Err(SimError::Parse {
                    line: i + 1,
                    message: format!("expected 9 fields, found {}", nums.len()),
                });
            }
            out.push(Waypoint {
                time: nums[0],
                pose: Pose::new(
                    Vec3::new(nums[1], nums[2], nums[3]),
                    Quaternion::new(nums[4], nums[5], nums[6], nums[7]),
                ),
                gripper_width: nums[8],
            });
        }
        Self::new(out, interpolation)
    }

    pub fn to_waypoint_text(&self) -> String {
        let mut s = String::from("# t_s tx ty tz qw qx qy qz width\n");
        for w in &self.waypoints {
            let a = w.pose.to_array();
            s.push_str(&format!(
                "{} {} {} {} {} {} {} {} {}\n",
                w.time, a[0], a[1], a[2], a[3], a[4], a[5], a[6], w.gripper_width
            ));
        }
        s
    }
}

/// Perturbs a pose: Gaussian translation per axis plus a rotation about a
/// uniform random axis by a Gaussian angle. Always consumes the same draws.
fn perturb(pose: &Pose, noise: &NoiseModel, rng: &mut SimRng) -> Pose {
    let dt = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
    let axis = rng.unit_vector();
    let angle = rng.gaussian();
    let mut out = *pose;
    if noise.translational_sigma > 0.0 {
        out.translation += dt * noise.translational_sigma;
    }
    if noise.rotational_sigma > 0.0 {
        let dq = Quaternion::from_axis_angle(&axis, angle * noise.rotational_sigma);
        out.rotation = dq.mul(&pose.rotation);
    }
    out
}

/// Samples `traj` on a `rate` Hz grid over `[0, duration]` seconds.
///
/// Sample `k` is taken at grid time `t_k`; its device timestamp is
/// `t_k + latency + jitter`, kept non-decreasing. The random sequence is
/// selected by `(noise.seed, source)`.
pub fn generate_stream(
    traj: &ScriptedTrajectory,
    noise: &NoiseModel,
    rate: f64,
    duration: f64,
    source: Source,
) -> Result<Vec<StreamSample>, SimError> {
    noise.validate()?;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(SimError::InvalidNoise(format!("rate {rate}")));
    }
    let span = traj.span();
    if duration.is_nan() || duration < 0.0 || duration > span + 1e-12 {
        return Err(SimError::DurationExceedsTrajectory { duration, span });
    }
    let mut rng = SimRng::new(noise.seed, source.code() as u64);
    let drift_dir = rng.unit_vector();
    let end_us = (duration * 1e6).round() as Micros;
    let mut out = Vec::new();
    let mut last_time: Micros = 0;
    let mut k = 0u64;
    loop {
        let grid = tick_time(k, rate);
        if grid > end_us {
            break;
        }
        let t = grid as f64 / 1e6;
        let (truth, width) = traj.sample(t);
        let mut pose = perturb(&truth, noise, &mut rng);
        if noise.drift_rate > 0.0 {
            pose.translation += drift_dir * (noise.drift_rate * t);
        }
        let jitter = rng.gaussian() * noise.jitter_sigma;
        let stamped = (grid as f64 + noise.latency as f64 + jitter).round().max(0.0) as Micros;
        let device_time = stamped.max(last_time);
        last_time = device_time;
        out.push(StreamSample {
            source,
            seq: k as u32,
            device_time,
            pose,
            gripper_width: source.is_controller().then_some(width.max(0.0)),
            buttons: 0,
            flags: if traj.lost_at(t) { crate::streaming::FLAG_TRACKING_LOST } else { 0 },
        });
        k += 1;
    }
    Ok(out)
}

/// Raw docked tip poses for a tracking frame related to the world by
/// `ground_truth_world` (world_from_tracking), plus noise.
pub fn simulate_dock(spec: &PlaceholderSpec, ground_truth_world: &Pose, noise: &NoiseModel) -> (Pose, Pose) {
    let tracking_from_world = inverse(ground_truth_world);
    let mut rng = SimRng::new(noise.seed, 0x646f_636b);
    let left = compose(&tracking_from_world, &spec.left_dock_in_world);
    let right = compose(&tracking_from_world, &spec.right_dock_in_world);
    (perturb(&left, noise, &mut rng), perturb(&right, noise, &mut rng))
}

/// Scene parameters for simulated tape-measure trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeMeasureScene {
    pub extrinsics: ExtrinsicSet,
    /// tracker sample rate, Hz
    pub sample_rate: f64,
    /// episode frame rate, Hz
    pub frame_rate: f64,
    /// seconds spent spreading the grippers apart
    pub move_duration: f64,
    /// seconds the grippers rest at the measured span
    pub hold_duration: f64,
    pub hold_limit: u32,
    /// meters, both grippers
    pub gripper_width: f64,
}

impl Default for TapeMeasureScene {
    fn default() -> Self {
        TapeMeasureScene {
            extrinsics: ExtrinsicSet::default(),
            sample_rate: 90.0,
            frame_rate: 30.0,
            move_duration: 1.0,
            hold_duration: 1.0,
            hold_limit: crate::streaming::DEFAULT_HOLD_LIMIT,
            gripper_width: 0.02,
        }
    }
}

fn mix_seed(seed: u64, trial: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Tip trajectories for one trial: the left tip rests at the world origin,
/// the right tip slides out along +x to `nominal` and stays there.
fn tape_measure_streams(
    nominal: f64,
    noise: &NoiseModel,
    scene: &TapeMeasureScene,
) -> Result<SourceStreams, SimError> {
    let span = scene.move_duration + scene.hold_duration;
    let left_tip_ext = scene.extrinsics.tip(FrameId::LeftTip)?.transform;
    let right_tip_ext = scene.extrinsics.tip(FrameId::RightTip)?.transform;
    let controller = |tip: Pose, ext: &Pose| compose(&tip, &inverse(ext));
    let w = scene.gripper_width;
    let wp = |time, pose| Waypoint {
        time,
        pose,
        gripper_width: w,
    };

    let left_c = controller(Pose::IDENTITY, &left_tip_ext);
    let left = ScriptedTrajectory::stationary(left_c, w, span);
    let start = controller(Pose::from_translation(nominal.min(0.05), 0.0, 0.0), &right_tip_ext);
    let end = controller(Pose::from_translation(nominal, 0.0, 0.0), &right_tip_ext);
    let right = ScriptedTrajectory::new(
        vec![wp(0.0, start), wp(scene.move_duration, end), wp(span, end)],
        Interpolation::LinearSlerp,
    )?;
    let head = ScriptedTrajectory::stationary(Pose::from_translation(0.5 * nominal, -0.35, 0.45), 0.0, span);

    let mut streams = SourceStreams::default();
    for (src, traj) in [
        (Source::LeftController, &left),
        (Source::RightController, &right),
        (Source::Hmd, &head),
    ] {
        let mut samples = generate_stream(traj, noise, scene.sample_rate, span, src)?;
        // clock-align: the simulator's latency is the device offset
        for s in &mut samples {
            s.device_time = s.device_time.saturating_sub(noise.latency);
        }
        *streams.get_mut(src) = samples;
    }
    Ok(streams)
}

/// One episode per nominal span whose final frames hold the tips static at
/// that separation (before noise).
pub fn simulate_tape_measure(nominals: &[f64], noise: &NoiseModel) -> Result<Vec<(f64, Episode)>, SimError> {
    simulate_tape_measure_with(nominals, noise, &TapeMeasureScene::default())
}

pub fn simulate_tape_measure_with(
    nominals: &[f64],
    noise: &NoiseModel,
    scene: &TapeMeasureScene,
) -> Result<Vec<(f64, Episode)>, SimError> {
    let mut out = Vec::with_capacity(nominals.len());
    for (i, &nominal) in nominals.iter().enumerate() {
        if !(nominal.is_finite() && nominal > 0.0) {
            return Err(SimError::InvalidNominal(nominal));
        }
        let trial_noise = noise.with_seed(mix_seed(noise.seed, i as u64));
        let streams = tape_measure_streams(nominal, &trial_noise, scene)?;
        let cfg = ResampleConfig {
            rate: scene.frame_rate,
            hold_limit: scene.hold_limit,
            origin: 0,
            end: Some(((scene.move_duration + scene.hold_duration) * 1e6).round() as Micros),
        };
        let calibration = CalibrationState::identity();
        let frames = resample(&streams, &calibration, &scene.extrinsics, &[], &cfg)?.frames;
        let mut header = EpisodeHeader::new(
            format!("tape_measure_{:03}cm", (nominal * 100.0).round() as u64),
            "sim",
            SourceKind::ActiveUmi,
        );
        header.rate = scene.frame_rate;
        header.calibration = calibration;
        header.extrinsics = scene.extrinsics.clone();
        header.metadata.insert("nominal_m".into(), nominal.to_string());
        header.metadata.insert("sim_seed".into(), noise.seed.to_string());
        out.push((nominal, Episode::new(header, frames)));
    }
    Ok(out)
}
