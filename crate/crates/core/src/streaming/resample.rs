//! Assembles per-device sample streams into a fixed-rate frame timeline.

use thiserror::Error;

use super::protocol::{EventCode, Source, StreamSample};
use crate::calibration::{apply_calibration, CalibrationState};
use crate::geometry::{to_tip, ExtrinsicSet, FrameId, GeometryError, Pose};
use crate::Micros;

pub const DEFAULT_RATE_HZ: f64 = 30.0;
pub const DEFAULT_HOLD_LIMIT: u32 = 5;

/// Validity mask with all three channels set.
pub const ALL_VALID: u8 = 0b111;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("EmptyStream: no samples from {0:?}")]
    EmptyStream(Source),
    #[error("NonMonotonicTime: {stream:?} sample {index} at {time} us precedes {previous} us")]
    NonMonotonicTime {
        stream: Source,
        index: usize,
        time: Micros,
        previous: Micros,
    },
    #[error("InvalidRate: {0}")]
    InvalidRate(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Microsecond offset of tick `k` on a `rate` Hz grid: `round(k * 1e6 / rate)`.
/// Integral rates use exact integer arithmetic.
pub fn tick_time(k: u64, rate: f64) -> Micros {
    if rate.fract() == 0.0 && rate >= 1.0 && rate <= u32::MAX as f64 {
        let r = rate as u128;
        let num = 2 * k as u128 * 1_000_000 + r;
        (num / (2 * r)) as Micros
    } else {
        (k as f64 * 1e6 / rate).round() as Micros
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncedFrame {
    pub index: u64,
    /// Microseconds since the timeline origin; always `tick_time(index, rate)`.
    pub timeline_time: Micros,
    pub left_tip: Pose,
    pub right_tip: Pose,
    pub head: Pose,
    pub left_width: f64,
    pub right_width: f64,
    /// One bit per [`Source`], see [`Source::validity_bit`].
    pub validity: u8,
    pub events: Vec<EventCode>,
}

impl SyncedFrame {
    pub fn is_valid(&self, source: Source) -> bool {
        self.validity & source.validity_bit() != 0
    }

    pub fn pose(&self, source: Source) -> &Pose {
        match source {
            Source::LeftController => &self.left_tip,
            Source::RightController => &self.right_tip,
            Source::Hmd => &self.head,
        }
    }
}

/// Clock-aligned per-device samples; `device_time` is pipeline time here.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SourceStreams {
    pub left: Vec<StreamSample>,
    pub right: Vec<StreamSample>,
    pub hmd: Vec<StreamSample>,
}

impl SourceStreams {
    pub fn get(&self, source: Source) -> &[StreamSample] {
        match source {
            Source::LeftController => &self.left,
            Source::RightController => &self.right,
            Source::Hmd => &self.hmd,
        }
    }

    pub fn get_mut(&mut self, source: Source) -> &mut Vec<StreamSample> {
        match source {
            Source::LeftController => &mut self.left,
            Source::RightController => &mut self.right,
            Source::Hmd => &mut self.hmd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub rate: f64,
    /// Ticks further than this many periods past the last sample are held
    /// and marked invalid.
    pub hold_limit: u32,
    /// Pipeline time of frame 0.
    pub origin: Micros,
    /// Last pipeline time to cover; defaults to the latest sample.
    pub end: Option<Micros>,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            rate: DEFAULT_RATE_HZ,
            hold_limit: DEFAULT_HOLD_LIMIT,
            origin: 0,
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub frames: Vec<SyncedFrame>,
    /// Per frame and source: microseconds since the sample at or before the
    /// tick, `None` before the first sample.
    pub source_age: Vec<[Option<Micros>; 3]>,
}

struct Contribution {
    pose: Pose,
    width: f64,
    valid: bool,
    age: Option<Micros>,
}

/// Pose and width of one stream at pipeline time `t`, in the tracking frame.
fn sample_at(samples: &[&StreamSample], t: Micros, hold_us: Micros) -> Contribution {
    let width = |s: &StreamSample| s.gripper_width.unwrap_or(0.0);
    let after = samples.partition_point(|s| s.device_time <= t);
    if after == 0 {
        let first = samples[0];
        return Contribution {
            pose: first.pose,
            width: width(first),
            valid: false,
            age: None,
        };
    }
    let prev = samples[after - 1];
    let age = t - prev.device_time;
    let held = Contribution {
        pose: prev.pose,
        width: width(prev),
        valid: false,
        age: Some(age),
    };
    if age == 0 {
        return Contribution { valid: true, ..held };
    }
    let Some(next) = samples.get(after) else {
        return held;
    };
    if age > hold_us {
        return held;
    }
    let span = (next.device_time - prev.device_time) as f64;
    let s = age as f64 / span;
    let a = &prev.pose;
    let b = &next.pose;
    Contribution {
        pose: Pose::new(
            a.translation + (b.translation - a.translation) * s,
            a.rotation.slerp(&b.rotation, s),
        ),
        width: width(prev) + (width(next) - width(prev)) * s,
        valid: true,
        age: Some(age),
    }
}

fn check_monotonic(source: Source, samples: &[StreamSample]) -> Result<(), ResampleError> {
    if samples.is_empty() {
        return Err(ResampleError::EmptyStream(source));
    }
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].device_time < w[0].device_time {
            return Err(ResampleError::NonMonotonicTime {
                stream: source,
                index: i + 1,
                time: w[1].device_time,
                previous: w[0].device_time,
            });
        }
    }
    Ok(())
}

/// Builds the synchronized frame timeline.
///
/// Each tick interpolates between the bracketing samples of every source
/// (linear in translation and width, slerp in rotation), then maps the
/// result through the calibration and, for controllers, the tip extrinsic.
/// Ticks outside a source's sample span, or more than `hold_limit` periods
/// after its latest sample, hold that sample and clear the validity bit.
/// Samples flagged tracking-lost are ignored. Events attach to the frame
/// whose interval `[t_k, t_k+1)` contains them, clamped to the timeline.
pub fn resample(
    streams: &SourceStreams,
    calibration: &CalibrationState,
    extrinsics: &ExtrinsicSet,
    events: &[(Micros, EventCode)],
    cfg: &ResampleConfig,
) -> Result<Resampled, ResampleError> {
    if !(cfg.rate.is_finite() && cfg.rate > 0.0) {
        return Err(ResampleError::InvalidRate(cfg.rate));
    }
    for src in Source::ALL {
        check_monotonic(src, streams.get(src))?;
    }
    let left_ext = *extrinsics.tip(FrameId::LeftTip)?;
    let right_ext = *extrinsics.tip(FrameId::RightTip)?;

    let usable: Vec<Vec<&StreamSample>> = Source::ALL
        .iter()
        .map(|&src| {
            let all = streams.get(src);
            let good: Vec<_> = all.iter().filter(|s| !s.tracking_lost()).collect();
            if good.is_empty() {
                // Nothing trackable: hold the first sample, never valid.
                vec![&all[0]]
            } else {
                good
            }
        })
        .collect();
    let never_tracked: Vec<bool> = Source::ALL
        .iter()
        .map(|&src| streams.get(src).iter().all(|s| s.tracking_lost()))
        .collect();

    let end = cfg.end.unwrap_or_else(|| {
        Source::ALL
            .iter()
            .map(|&s| streams.get(s).last().unwrap().device_time)
            .max()
            .unwrap()
    });
    let hold_us = tick_time(cfg.hold_limit as u64, cfg.rate);

    let mut frames = Vec::new();
    let mut ages = Vec::new();
    let mut k = 0u64;
    loop {
        let rel = tick_time(k, cfg.rate);
        let t = cfg.origin.saturating_add(rel);
        if t > end {
            break;
        }
        let mut validity = 0u8;
        let mut age = [None; 3];
        let mut poses = [Pose::IDENTITY; 3];
        let mut widths = [0.0; 3];
        for (i, &src) in Source::ALL.iter().enumerate() {
            let c = sample_at(&usable[i], t, hold_us);
            if c.valid && !never_tracked[i] {
                validity |= src.validity_bit();
            }
            age[i] = c.age;
            let world = apply_calibration(&c.pose, calibration);
            poses[i] = match src {
                Source::LeftController => to_tip(&world, &left_ext)?,
                Source::RightController => to_tip(&world, &right_ext)?,
                Source::Hmd => world,
            };
            widths[i] = c.width;
        }
        frames.push(SyncedFrame {
            index: k,
            timeline_time: rel,
            left_tip: poses[0],
            right_tip: poses[1],
            head: poses[2],
            left_width: widths[0],
            right_width: widths[1],
            validity,
            events: Vec::new(),
        });
        ages.push(age);
        k += 1;
    }

    if !frames.is_empty() {
        let last = frames.len() - 1;
        for &(t, code) in events {
            let rel = t.saturating_sub(cfg.origin);
            let idx = frames
                .partition_point(|f| f.timeline_time <= rel)
                .saturating_sub(1)
                .min(last);
            frames[idx].events.push(code);
        }
    }

    Ok(Resampled {
        frames,
        source_age: ages,
    })
}
