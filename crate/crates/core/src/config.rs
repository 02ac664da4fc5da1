//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! # comments start with '#'
//! rate = 30
//! hold_limit = 5
//! gap_limit = 15
//! max_gripper_width = 0.1
//! output_dir = episodes
//! extrinsic.left_tip = 0 0 0.15 1 0 0 0     # tx ty tz qw qx qy qz
//! extrinsic.right_tip = 0 0 0.15 1 0 0 0
//! placeholder.left_dock = -0.1 0 0 1 0 0 0
//! placeholder.right_dock = 0.1 0 0 1 0 0 0
//! haptic.radius = 0.03
//! haptic.pulse_frequency_hz = 160
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calibration::{HapticZoneConfig, PlaceholderSpec};
use crate::geometry::{Extrinsic, ExtrinsicSet, FrameId, Pose, Quaternion, Vec3};
use crate::recording::ValidationLimits;
use crate::streaming::{ResampleConfig, DEFAULT_HOLD_LIMIT, DEFAULT_RATE_HZ};

pub const CONFIG_ENV: &str = "AUMI_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("ConfigUnknownKey: line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("ConfigDuplicateKey: line {line}: {key:?} already set")]
    DuplicateKey { line: usize, key: String },
    #[error("ConfigSyntax: line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("ConfigValue: line {line}: {key}: {message}")]
    Value {
        line: usize,
        key: String,
        message: String,
    },
    #[error("ConfigIo: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rate: f64,
    pub extrinsics: ExtrinsicSet,
    pub placeholder: PlaceholderSpec,
    pub haptic: HapticZoneConfig,
    pub hold_limit: u32,
    pub gap_limit: u32,
    pub max_gripper_width: f64,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rate: DEFAULT_RATE_HZ,
            extrinsics: ExtrinsicSet::default(),
            placeholder: PlaceholderSpec::default(),
            haptic: HapticZoneConfig::default(),
            hold_limit: DEFAULT_HOLD_LIMIT,
            gap_limit: crate::recording::episode::DEFAULT_GAP_LIMIT,
            max_gripper_width: crate::recording::episode::DEFAULT_MAX_GRIPPER_WIDTH,
            output_dir: PathBuf::from("episodes"),
        }
    }
}

/// Parses `tx ty tz qw qx qy qz`.
pub fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != 7 {
        return Err(format!("expected 7 numbers (tx ty tz qw qx qy qz), found {}", v.len()));
    }
    let q = Quaternion::from_raw(v[3], v[4], v[5], v[6]);
    if q.norm() < 1e-6 {
        return Err("zero quaternion".into());
    }
    Pose::try_new(Vec3::new(v[0], v[1], v[2]), q).map_err(|e| e.to_string())
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        let mut left_tip = Extrinsic::default_tip(FrameId::LeftTip);
        let mut right_tip = Extrinsic::default_tip(FrameId::RightTip);
        let mut radius = cfg.haptic.radius;
        let mut pulse = cfg.haptic.pulse_frequency_hint;
        let mut radius_line = 0;
        let mut seen = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |message: String| ConfigError::Value {
                line,
                key: key.to_owned(),
                message,
            };
            let float = || -> Result<f64, ConfigError> {
                let v: f64 = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?;
                if !v.is_finite() {
                    return Err(bad("must be finite".into()));
                }
                Ok(v)
            };
            let uint = || value.parse::<u32>().map_err(|e| bad(format!("{value:?}: {e}")));
            let pose = || parse_pose(value).map_err(bad);
            match key {
                "rate" => {
                    cfg.rate = float()?;
                    if cfg.rate <= 0.0 {
                        return Err(bad("must be positive".into()));
                    }
                }
                "hold_limit" => cfg.hold_limit = uint()?,
                "gap_limit" => cfg.gap_limit = uint()?,
                "max_gripper_width" => {
                    cfg.max_gripper_width = float()?;
                    if cfg.max_gripper_width <= 0.0 {
                        return Err(bad("must be positive".into()));
                    }
                }
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "extrinsic.left_tip" => left_tip.transform = pose()?,
                "extrinsic.right_tip" => right_tip.transform = pose()?,
                "placeholder.left_dock" => cfg.placeholder.left_dock_in_world = pose()?,
                "placeholder.right_dock" => cfg.placeholder.right_dock_in_world = pose()?,
                "haptic.radius" => {
                    radius = float()?;
                    radius_line = line;
                }
                "haptic.pulse_frequency_hz" => pulse = float()?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
            if !seen.insert(key.to_owned()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.to_owned(),
                });
            }
        }
        cfg.haptic = HapticZoneConfig::new(radius, pulse).map_err(|e| ConfigError::Value {
            line: radius_line,
            key: "haptic.radius".into(),
            message: e.to_string(),
        })?;
        cfg.extrinsics = ExtrinsicSet::new(vec![left_tip, right_tip]).expect("distinct tip edges");
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Explicit path, else `$AUMI_CONFIG`, else defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn resample_config(&self) -> ResampleConfig {
        ResampleConfig {
            rate: self.rate,
            hold_limit: self.hold_limit,
            ..Default::default()
        }
    }

    pub fn validation_limits(&self) -> ValidationLimits {
        ValidationLimits {
            max_gripper_width: self.max_gripper_width,
            gap_limit: self.gap_limit,
            ..Default::default()
        }
    }
}
