use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rig: {0}")]
    InvalidRig(String),
    #[error("delta_alpha {delta_alpha} deg must lie in (0, {limit}) for n={n} views")]
    OverlapViolation {
        delta_alpha: f64,
        limit: f64,
        n: usize,
    },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point lies behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid depth {0}, must be > 0")]
    InvalidDepth(f64),
    #[error("degenerate epipolar geometry: {0}")]
    DegenerateEpipolar(&'static str),
    #[error("camera at distance {distance} is inside the scene bound {bound}")]
    InsideScene { distance: f64, bound: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid feature spec: {0}")]
    InvalidSpec(String),
    #[error("no foreground pixels")]
    EmptyForeground,
    #[error("invalid infidelity parameters: {0}")]
    InvalidInfidelity(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("layer mismatch: source {src:?}, target {dst:?}")]
    LayerMismatch { src: Vec<u32>, dst: Vec<u32> },
    #[error("correlation resolution {h}x{w} exceeds the dense capacity of 64x64")]
    Capacity { h: usize, w: usize },
    #[error("correlation volume has negative scores; map to [0, 1] first")]
    NegativeScores,
    #[error("kernel size {0} must be odd and >= 1")]
    InvalidKernel(usize),
    #[error("iteration {t} outside [0, {total})")]
    InvalidIteration { t: usize, total: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("correction stalled: no surviving matches for {iterations} consecutive correspondence iterations (last at t={t})")]
    Stalled {
        iterations: usize,
        t: usize,
        diagnostics: Box<StallDiagnostics>,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Snapshot of the last correspondence step before a correction run gave up.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct StallDiagnostics {
    pub delta_alpha: f64,
    /// Per pair: matches remaining after each filter stage.
    pub stage_counts: Vec<crate::filter::StageCounts>,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
