//! Orbit rigs made of two interlinked view sets.
//!
//! `V1` holds `n` cameras at equispaced azimuths, `V2` repeats the same
//! orbit shifted by `delta_alpha`, so every `V1[i]` has a close neighbour
//! `V2[i]` with a large overlapping field of view.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Intrinsics};
use crate::error::{Error, Result};

/// Lower end of the azimuth offset range used when sampling.
pub const DELTA_ALPHA_MIN_DEG: f64 = 10.0;
/// Upper end of the azimuth offset range used when sampling.
pub const DELTA_ALPHA_MAX_DEG: f64 = 30.0;

/// How the azimuth offset between the two view sets is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaAlpha {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
}

impl DeltaAlpha {
    pub const RANDOM: DeltaAlpha = DeltaAlpha::Uniform {
        lo: DELTA_ALPHA_MIN_DEG,
        hi: DELTA_ALPHA_MAX_DEG,
    };

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DeltaAlpha::Fixed(v) => v,
            DeltaAlpha::Uniform { lo, hi } if hi > lo => rng.random_range(lo..=hi),
            DeltaAlpha::Uniform { lo, .. } => lo,
        }
    }

    /// Largest value this policy can produce.
    pub fn upper(&self) -> f64 {
        match *self {
            DeltaAlpha::Fixed(v) => v,
            DeltaAlpha::Uniform { lo, hi } => lo.max(hi),
        }
    }
}

impl fmt::Display for DeltaAlpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaAlpha::Fixed(v) => write!(f, "fixed:{v}"),
            DeltaAlpha::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

/// Accepts `"fixed:20"`, `"uniform:10:30"`, `"random"` or a bare number.
impl FromStr for DeltaAlpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid delta_alpha policy {s:?}"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let s = s.trim();
        if s == "random" {
            return Ok(DeltaAlpha::RANDOM);
        }
        if let Some(rest) = s.strip_prefix("fixed:") {
            return Ok(DeltaAlpha::Fixed(num(rest)?));
        }
        if let Some(rest) = s.strip_prefix("uniform:") {
            let (lo, hi) = rest.split_once(':').ok_or_else(bad)?;
            let (lo, hi) = (num(lo)?, num(hi)?);
            if !(lo <= hi) {
                return Err(bad());
            }
            return Ok(DeltaAlpha::Uniform { lo, hi });
        }
        Ok(DeltaAlpha::Fixed(num(s)?))
    }
}

impl Serialize for DeltaAlpha {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DeltaAlpha {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DeltaAlpha::Fixed(v)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Orbit parameters shared by both view sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigSpec {
    pub n: usize,
    pub delta_alpha: DeltaAlpha,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_elevation")]
    pub elevation: f64,
    #[serde(default)]
    pub first_azimuth: f64,
    pub intrinsics: Intrinsics,
}

fn default_radius() -> f64 {
    2.5
}

fn default_elevation() -> f64 {
    15.0
}

impl RigSpec {
    pub fn new(n: usize, delta_alpha: DeltaAlpha, intrinsics: Intrinsics) -> Self {
        Self {
            n,
            delta_alpha,
            radius: default_radius(),
            elevation: default_elevation(),
            first_azimuth: 0.0,
            intrinsics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub n: usize,
    pub delta_alpha: f64,
    pub radius: f64,
    pub elevation: f64,
    #[serde(default)]
    pub first_azimuth: f64,
    pub v1: Vec<Camera>,
    pub v2: Vec<Camera>,
}

/// Camera on the orbit sphere looking at the world origin with z up.
pub fn orbit_camera(
    intrinsics: Intrinsics,
    radius: f64,
    azimuth_deg: f64,
    elevation_deg: f64,
) -> Result<Camera> {
    let (a, e) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let eye = Vector3::new(a.cos() * e.cos(), a.sin() * e.cos(), e.sin()) * radius;
    Camera::look_at(intrinsics, eye, Vector3::zeros(), Vector3::z())
}

/// Builds the two interlinked view sets. A `Uniform` offset is drawn once from `seed`.
pub fn build_rig(spec: &RigSpec, seed: u64) -> Result<CameraRig> {
    if spec.n < 2 {
        return Err(Error::InvalidRig(format!("need at least 2 views, got {}", spec.n)));
    }
    if !(spec.radius > 0.0) || !spec.radius.is_finite() {
        return Err(Error::InvalidRig(format!("radius must be > 0, got {}", spec.radius)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta_alpha = spec.delta_alpha.sample(&mut rng);
    rig_with_offset(spec, delta_alpha)
}

/// Builds the rig for an explicit azimuth offset.
pub fn rig_with_offset(spec: &RigSpec, delta_alpha: f64) -> Result<CameraRig> {
    if spec.n < 2 {
        return Err(Error::InvalidRig(format!("need at least 2 views, got {}", spec.n)));
    }
    let step = 360.0 / spec.n as f64;
    if !(delta_alpha > 0.0 && delta_alpha < step) {
        return Err(Error::OverlapViolation {
            delta_alpha,
            limit: step,
            n: spec.n,
        });
    }
    let mut v1 = Vec::with_capacity(spec.n);
    let mut v2 = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let alpha = spec.first_azimuth + step * i as f64;
        v1.push(orbit_camera(spec.intrinsics, spec.radius, alpha, spec.elevation)?);
        v2.push(orbit_camera(
            spec.intrinsics,
            spec.radius,
            alpha + delta_alpha,
            spec.elevation,
        )?);
    }
    Ok(CameraRig {
        n: spec.n,
        delta_alpha,
        radius: spec.radius,
        elevation: spec.elevation,
        first_azimuth: spec.first_azimuth,
        v1,
        v2,
    })
}

impl CameraRig {
    /// Adjacent pairs `(V1[i], V2[i])`.
    pub fn pairs(&self) -> impl Iterator<Item = (&Camera, &Camera)> {
        self.v1.iter().zip(self.v2.iter())
    }

    /// Second view set re-placed at a different offset, first set unchanged.
    pub fn with_offset(&self, intrinsics: Intrinsics, delta_alpha: f64) -> Result<CameraRig> {
        let spec = RigSpec {
            n: self.n,
            delta_alpha: DeltaAlpha::Fixed(delta_alpha),
            radius: self.radius,
            elevation: self.elevation,
            first_azimuth: self.first_azimuth,
            intrinsics,
        };
        rig_with_offset(&spec, delta_alpha)
    }
}

/// Signed angle difference `b - a` wrapped into (-180, 180].
pub fn azimuth_difference(a_deg: f64, b_deg: f64) -> f64 {
    let mut d = (b_deg - a_deg) % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}
