//! `aumi` command line: simulate, record, inspect, eval-rpe, mix,
//! calibrate-check and replay.
//!
//! Exit codes: 0 success, 1 operational error, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::calibration::{dock_calibrate, dock_residuals, CalibrationError};
use crate::config::{parse_pose, ConfigError, PipelineConfig};
use crate::geometry::Pose;
use crate::pipeline::{
    record_streams, simulate_capture, write_episodes, CaptureCalibration, CaptureScenario, PipelineError,
    SessionOptions, SessionOutput,
};
use crate::recording::{
    build_mix_manifest, dump_tsv, read_episode, scan_episode_dir, validate_episode, Episode, ManifestError,
    RecordingError, SourceKind,
};
use crate::replay_eval::{
    extract_command_stream, tape_measure_nominals, tape_measure_protocol, BiasReplayer, EvalError,
    IdentityReplayer, NoiseReplayer, ProtocolOptions, Replayer,
};
use crate::simsource::{simulate_tape_measure_with, NoiseModel, SimError, TapeMeasureScene};
use crate::streaming::Source;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("MissingNominal: {0} has no nominal_m metadata")]
    MissingNominalMetadata(PathBuf),
    #[error("NoEpisodes: no .aumi files in {0}")]
    NoEpisodes(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Activeumi,
    Teleop,
}

impl From<Kind> for SourceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Activeumi => SourceKind::ActiveUmi,
            Kind::Teleop => SourceKind::Teleop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibrationKind {
    Dock,
    ZeroPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ReplayerSpec {
    Identity,
    Bias(f64),
    Noise(f64),
}

fn parse_replayer(s: &str) -> Result<ReplayerSpec, String> {
    let num = |v: &str| -> Result<f64, String> {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("{v:?} is not a finite number"))
    };
    match s.split_once(':') {
        None if s == "identity" => Ok(ReplayerSpec::Identity),
        Some(("bias", v)) => Ok(ReplayerSpec::Bias(num(v)?)),
        Some(("noise", v)) => {
            let sigma = num(v)?;
            if sigma < 0.0 {
                return Err("noise sigma must be non-negative".into());
            }
            Ok(ReplayerSpec::Noise(sigma))
        }
        _ => Err("expected identity, bias:<meters> or noise:<sigma meters>".into()),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a positive number")),
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("{s:?} is not a non-negative number")),
    }
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        _ => Err(format!("{s:?} is not in [0, 1)")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "aumi", version, about = "Bimanual VR teleoperation data pipeline")]
struct Cli {
    /// Pipeline configuration file (falls back to $AUMI_CONFIG)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate simulated sessions and write episode files
    Simulate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Frame rate, Hz (overrides the config)
        #[arg(long, value_parser = parse_positive)]
        rate: Option<f64>,
        /// Write the ten tape-measure trials instead of a scripted session
        #[arg(long)]
        tape_measure: bool,
        /// Tracking noise, meters per axis
        #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
        noise: f64,
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        /// Seconds per episode
        #[arg(long, default_value_t = 4.0, value_parser = parse_positive)]
        duration: f64,
        #[arg(long, value_enum, default_value_t = Kind::Activeumi)]
        kind: Kind,
        #[arg(long, value_enum, default_value_t = CalibrationKind::Dock)]
        calibration: CalibrationKind,
        /// Also write the raw wire streams here
        #[arg(long, value_name = "DIR")]
        capture: Option<PathBuf>,
        #[arg(long, default_value = "sim_task")]
        task: String,
    },
    /// Assemble episodes from wire-protocol streams
    Record {
        /// One capture file per device connection
        #[arg(long = "input", value_name = "FILE", required_unless_present = "listen", conflicts_with = "listen")]
        inputs: Vec<PathBuf>,
        /// Accept device connections on this TCP address
        #[arg(long, value_name = "ADDR")]
        listen: Option<String>,
        #[arg(long, default_value_t = 3)]
        connections: usize,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_parser = parse_positive)]
        rate: Option<f64>,
        #[arg(long, default_value = "task")]
        task: String,
        #[arg(long, default_value = "operator")]
        operator: String,
        #[arg(long, value_enum, default_value_t = Kind::Activeumi)]
        kind: Kind,
    },
    /// Print an episode header and its diagnostics
    Inspect { file: PathBuf },
    /// Tape-measure replay fidelity over a directory of trials
    EvalRpe {
        dir: PathBuf,
        /// identity, bias:<meters> or noise:<sigma meters>
        #[arg(long, default_value = "identity", value_parser = parse_replayer)]
        replayer: ReplayerSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build a data-mixing manifest
    Mix {
        #[arg(long, value_name = "DIR")]
        activeumi: PathBuf,
        #[arg(long, value_name = "DIR")]
        teleop: Option<PathBuf>,
        /// Teleop episodes per ActiveUMI episode
        #[arg(long, value_parser = parse_ratio)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Solve a dock calibration from two raw tip poses
    CalibrateCheck {
        /// "tx ty tz qw qx qy qz"
        #[arg(long, allow_hyphen_values = true, value_parser = parse_pose)]
        left: Pose,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_pose)]
        right: Pose,
    },
    /// Print the robot command stream of an episode
    Replay { file: PathBuf },
}

/// Runs the CLI with `argv` (including the program name). Never panics on
/// bad input; returns the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    let mut buf = String::new();
    let result = run(cli, &mut buf);
    let _ = out.write_all(buf.as_bytes());
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn run(cli: Cli, o: &mut String) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::resolve(cli.config.as_deref())?;
    let fmt = cli.format;
    match cli.command {
        Command::Simulate {
            seed,
            out,
            rate,
            tape_measure,
            noise,
            episodes,
            duration,
            kind,
            calibration,
            capture,
            task,
        } => {
            if let Some(r) = rate {
                cfg.rate = r;
            }
            let eps = if tape_measure {
                simulate_tape(&cfg, seed, noise)?
            } else {
                let sc = CaptureScenario {
                    seed,
                    episodes,
                    episode_duration: duration,
                    calibration: match calibration {
                        CalibrationKind::Dock => CaptureCalibration::Dock,
                        CalibrationKind::ZeroPoint => CaptureCalibration::ZeroPoint,
                    },
                    translational_sigma: noise,
                    ..Default::default()
                };
                let cap = simulate_capture(&sc, &cfg.extrinsics, &cfg.placeholder)?;
                let bytes: Vec<Vec<u8>> = Source::ALL.iter().map(|&s| cap.encode(s)).collect();
                if let Some(dir) = &capture {
                    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                    for (src, b) in Source::ALL.iter().zip(&bytes) {
                        let p = dir.join(format!("{}.wire", src.name()));
                        std::fs::write(&p, b).map_err(io_err(&p))?;
                    }
                }
                let opts = SessionOptions::from_config(&cfg, &task, "sim", kind.into());
                let session = record_streams(bytes.iter().map(|b| b.as_slice()).collect(), opts)?;
                report_session(&session, fmt, o);
                session.episodes
            };
            let paths = write_episodes(&out, &eps)?;
            list_written(&paths, &eps, fmt, o)?;
        }
        Command::Record {
            inputs,
            listen,
            connections,
            out,
            rate,
            task,
            operator,
            kind,
        } => {
            if let Some(r) = rate {
                cfg.rate = r;
            }
            let opts = SessionOptions::from_config(&cfg, &task, &operator, kind.into());
            let session = if let Some(addr) = listen {
                let path = PathBuf::from(&addr);
                let listener = TcpListener::bind(&addr).map_err(io_err(&path))?;
                let mut socks = Vec::with_capacity(connections);
                for _ in 0..connections {
                    socks.push(listener.accept().map_err(io_err(&path))?.0);
                }
                record_streams(socks, opts)?
            } else {
                let mut files = Vec::with_capacity(inputs.len());
                for p in &inputs {
                    files.push(std::io::BufReader::new(std::fs::File::open(p).map_err(io_err(p))?));
                }
                record_streams(files, opts)?
            };
            report_session(&session, fmt, o);
            let paths = write_episodes(&out, &session.episodes)?;
            list_written(&paths, &session.episodes, fmt, o)?;
        }
        Command::Inspect { file } => inspect(&file, &cfg, fmt, o)?,
        Command::EvalRpe { dir, replayer, seed } => eval_rpe(&dir, replayer, seed, &cfg, fmt, o)?,
        Command::Mix {
            activeumi,
            teleop,
            ratio,
            seed,
            out,
        } => {
            let a = scan_episode_dir(&activeumi)?;
            let t = match &teleop {
                Some(d) => scan_episode_dir(d)?,
                None => Vec::new(),
            };
            let m = build_mix_manifest(&a, &t, ratio, seed)?;
            let text = m.to_text();
            match out {
                None => o.push_str(&text),
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                    let p = dir.join("manifest.txt");
                    std::fs::write(&p, &text).map_err(io_err(&p))?;
                    match fmt {
                        Format::Human => {
                            writeln!(o, "manifest: {}", p.display()).unwrap();
                            writeln!(o, "activeumi: {}", m.activeumi_count).unwrap();
                            writeln!(o, "teleop: {} (pool {})", m.teleop_count, m.teleop_pool).unwrap();
                            for d in &m.diagnostics {
                                writeln!(o, "note: {d}").unwrap();
                            }
                        }
                        Format::Tsv => {
                            writeln!(o, "manifest\t{}", p.display()).unwrap();
                            writeln!(o, "activeumi\t{}", m.activeumi_count).unwrap();
                            writeln!(o, "teleop\t{}", m.teleop_count).unwrap();
                        }
                    }
                }
            }
        }
        Command::CalibrateCheck { left, right } => {
            let state = dock_calibrate(&left, &right, &cfg.placeholder, 0)?;
            let r = dock_residuals(&state.world_from_tracking, &left, &right, &cfg.placeholder);
            let w = &state.world_from_tracking;
            match fmt {
                Format::Human => {
                    writeln!(o, "world_from_tracking: {w}").unwrap();
                    writeln!(o, "left residual: {:.6} mm, {:.6} deg", r.left.0 * 1e3, r.left.1.to_degrees()).unwrap();
                    writeln!(o, "right residual: {:.6} mm, {:.6} deg", r.right.0 * 1e3, r.right.1.to_degrees())
                        .unwrap();
                }
                Format::Tsv => {
                    writeln!(o, "world_from_tracking\t{}", tsv_pose(w)).unwrap();
                    writeln!(o, "residual\tleft\t{}\t{}", r.left.0, r.left.1).unwrap();
                    writeln!(o, "residual\tright\t{}\t{}", r.right.0, r.right.1).unwrap();
                }
            }
        }
        Command::Replay { file } => {
            let ep = load(&file)?;
            let cmds = extract_command_stream(&ep, &cfg.validation_limits())?;
            for c in &cmds {
                let events: Vec<String> = c.events.iter().map(|e| e.0.to_string()).collect();
                match fmt {
                    Format::Tsv => writeln!(
                        o,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        c.time,
                        c.validity,
                        tsv_pose(&c.left_tip),
                        tsv_pose(&c.right_tip),
                        tsv_pose(&c.head),
                        c.left_width,
                        c.right_width,
                        events.join(",")
                    )
                    .unwrap(),
                    Format::Human => writeln!(
                        o,
                        "{:>10.4} s  valid={:03b}  L {} w={:.4}  R {} w={:.4}  H {}{}",
                        c.time as f64 / 1e6,
                        c.validity,
                        c.left_tip,
                        c.left_width,
                        c.right_tip,
                        c.right_width,
                        c.head,
                        if events.is_empty() {
                            String::new()
                        } else {
                            format!("  events={}", events.join(","))
                        }
                    )
                    .unwrap(),
                }
            }
        }
    }
    Ok(())
}

fn tsv_pose(p: &Pose) -> String {
    p.to_array().iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\t")
}

fn load(path: &Path) -> Result<Episode, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Ok(read_episode(&bytes)?)
}

fn simulate_tape(cfg: &PipelineConfig, seed: u64, sigma: f64) -> Result<Vec<Episode>, CliError> {
    let scene = TapeMeasureScene {
        extrinsics: cfg.extrinsics.clone(),
        frame_rate: cfg.rate,
        hold_limit: cfg.hold_limit,
        ..Default::default()
    };
    let noise = NoiseModel {
        translational_sigma: sigma,
        ..NoiseModel::zero(seed)
    };
    let trials = simulate_tape_measure_with(&tape_measure_nominals(), &noise, &scene)?;
    Ok(trials.into_iter().map(|(_, ep)| ep).collect())
}

fn report_session(s: &SessionOutput, fmt: Format, o: &mut String) {
    for c in &s.calibrations {
        match fmt {
            Format::Human => writeln!(
                o,
                "calibration: {} at {} us, world_from_tracking {}",
                c.method.name(),
                c.established_at,
                c.world_from_tracking
            )
            .unwrap(),
            Format::Tsv => writeln!(
                o,
                "calibration\t{}\t{}\t{}",
                c.method.name(),
                c.established_at,
                tsv_pose(&c.world_from_tracking)
            )
            .unwrap(),
        }
    }
    for r in &s.rejected {
        match fmt {
            Format::Human => writeln!(o, "rejected {} at {} us: {}", r.code.name(), r.time, r.error).unwrap(),
            Format::Tsv => writeln!(o, "rejected\t{}\t{}\t{}", r.code.name(), r.time, r.error).unwrap(),
        }
    }
}

fn list_written(paths: &[PathBuf], eps: &[Episode], fmt: Format, o: &mut String) -> Result<(), CliError> {
    for (p, ep) in paths.iter().zip(eps) {
        match fmt {
            Format::Human => writeln!(o, "wrote {} ({} frames)", p.display(), ep.frames.len()).unwrap(),
            Format::Tsv => writeln!(o, "episode\t{}\t{}", p.display(), ep.frames.len()).unwrap(),
        }
    }
    if fmt == Format::Human {
        writeln!(o, "{} episodes", paths.len()).unwrap();
    }
    Ok(())
}

fn inspect(path: &Path, cfg: &PipelineConfig, fmt: Format, o: &mut String) -> Result<(), CliError> {
    let ep = load(path)?;
    let diags = validate_episode(&ep, &cfg.validation_limits());
    match fmt {
        Format::Tsv => {
            o.push_str(&dump_tsv(&ep)?);
            for d in &diags {
                writeln!(
                    o,
                    "diagnostic\t{:?}\t{}\t{}\t{}",
                    d.kind,
                    d.frame.map_or("-".into(), |f| f.to_string()),
                    d.channel.unwrap_or("-"),
                    d.message
                )
                .unwrap();
            }
            writeln!(o, "diagnostics\t{}", diags.len()).unwrap();
        }
        Format::Human => {
            let h = &ep.header;
            writeln!(o, "file: {}", path.display()).unwrap();
            writeln!(o, "format_version: {}", h.format_version).unwrap();
            writeln!(o, "task_name: {}", h.task_name).unwrap();
            writeln!(o, "operator_id: {}", h.operator_id).unwrap();
            writeln!(o, "source_kind: {}", h.source_kind.name()).unwrap();
            writeln!(o, "rate: {} Hz", h.rate).unwrap();
            writeln!(o, "created_at_us: {}", h.created_at).unwrap();
            writeln!(
                o,
                "calibration: {} at {} us, world_from_tracking {}",
                h.calibration.method.name(),
                h.calibration.established_at,
                h.calibration.world_from_tracking
            )
            .unwrap();
            for e in h.extrinsics.iter() {
                writeln!(o, "extrinsic: {} -> {}: {}", e.parent.name(), e.child.name(), e.transform).unwrap();
            }
            for (k, v) in &h.metadata {
                writeln!(o, "meta: {k}={v}").unwrap();
            }
            let span = ep.frames.last().map_or(0, |f| f.timeline_time) - ep.frames.first().map_or(0, |f| f.timeline_time);
            writeln!(o, "frames: {} ({:.3} s)", ep.frames.len(), span as f64 / 1e6).unwrap();
            for src in Source::ALL {
                let n = ep.frames.iter().filter(|f| f.is_valid(src)).count();
                writeln!(o, "valid {}: {n}/{}", src.name(), ep.frames.len()).unwrap();
            }
            for &(frame, code) in &ep.events {
                writeln!(o, "event: frame {frame} {}", code.name()).unwrap();
            }
            for d in &diags {
                writeln!(o, "{d}").unwrap();
            }
            writeln!(o, "{} diagnostics", diags.len()).unwrap();
        }
    }
    Ok(())
}

fn eval_rpe(
    dir: &Path,
    spec: ReplayerSpec,
    seed: u64,
    cfg: &PipelineConfig,
    fmt: Format,
    o: &mut String,
) -> Result<(), CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "aumi"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::NoEpisodes(dir.to_owned()));
    }
    let mut trials = Vec::with_capacity(paths.len());
    for p in &paths {
        let ep = load(p)?;
        let nominal: f64 = ep
            .header
            .metadata
            .get("nominal_m")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::MissingNominalMetadata(p.clone()))?;
        trials.push((nominal, ep));
    }
    let mut replayer: Box<dyn Replayer> = match spec {
        ReplayerSpec::Identity => Box::new(IdentityReplayer),
        ReplayerSpec::Bias(b) => Box::new(BiasReplayer { bias: b }),
        ReplayerSpec::Noise(s) => Box::new(NoiseReplayer::new(s, seed)),
    };
    let opts = ProtocolOptions {
        limits: cfg.validation_limits(),
        ..Default::default()
    };
    let report = tape_measure_protocol(&trials, replayer.as_mut(), &opts)?;
    match fmt {
        Format::Tsv => o.push_str(&report.to_tsv()),
        Format::Human => {
            writeln!(o, "{:>10} {:>12} {:>12} {:>10}", "nominal_m", "replay_m", "delta_mm", "rpe_%").unwrap();
            for t in &report.trials {
                writeln!(o, "{:>10.3} {:>12.6} {:>12.4} {:>10.4}", t.nominal, t.replay, t.delta_l * 1e3, t.rpe).unwrap();
            }
            writeln!(o, "mean RPE {:.4}%", report.mean_rpe).unwrap();
        }
    }
    Ok(())
}
