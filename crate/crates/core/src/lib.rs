//! Data-collection pipeline for bimanual VR teleoperation with an active
//! head camera.
//!
//! Tracked controller and headset poses flow through:
//!
//! 1. [`geometry`]: SE(3) algebra and the controller-to-tip frame chain,
//! 2. [`calibration`]: zero-point reset, placeholder docking, haptic zone,
//! 3. [`streaming`]: wire protocol, clock alignment, 30 Hz resampling,
//! 4. [`recording`]: episode files and data-mixing manifests,
//! 5. [`replay_eval`]: command-stream replay and tape-measure RPE,
//!
//! with [`simsource`] standing in for the hardware.

pub mod calibration;
pub mod cli;
pub mod config;
pub mod geometry;
pub mod pipeline;
pub mod recording;
pub mod replay_eval;
pub mod rng;
pub mod simsource;
pub mod streaming;

/// Microseconds.
pub type Micros = u64;
