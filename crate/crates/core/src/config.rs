//! Experiment configuration file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::camera::Intrinsics;
use crate::correction::{CorrectionConfig, CorrectionProblem, CorrectionSettings};
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::loss::HuberConfig;
use crate::rig::{build_rig, DeltaAlpha, RigSpec};
use crate::scene::{InfidelitySpec, SdfScene};
use crate::schedule::Schedule;

/// Orbit rig with square-pixel intrinsics derived from a horizontal field of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub n: usize,
    pub delta_alpha: DeltaAlpha,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_elevation")]
    pub elevation: f64,
    #[serde(default)]
    pub first_azimuth: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
}

fn default_radius() -> f64 {
    2.5
}

fn default_elevation() -> f64 {
    15.0
}

fn default_fov() -> f64 {
    40.0
}

impl RigConfig {
    pub fn spec(&self) -> RigSpec {
        RigSpec {
            n: self.n,
            delta_alpha: self.delta_alpha,
            radius: self.radius,
            elevation: self.elevation,
            first_azimuth: self.first_azimuth,
            intrinsics: Intrinsics::from_fov(self.width, self.height, self.fov_deg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SdfScene,
    pub rig: RigConfig,
    pub infidelity: InfidelitySpec,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub huber: HuberConfig,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub correction: CorrectionConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Defaults to `[0, T]`.
    #[serde(default)]
    pub checkpoints: Option<Vec<usize>>,
    /// Disparity in pixels mapped to full white in heatmaps.
    #[serde(default = "default_clip")]
    pub heatmap_clip: f64,
}

fn default_clip() -> f64 {
    2.0
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked without rendering.
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.spec().intrinsics.validate()?;
        self.filter.validate()?;
        self.huber.validate()?;
        self.schedule.validate()?;
        self.correction.validate()?;
        if !(self.heatmap_clip > 0.0) {
            return Err(Error::Config(format!("heatmap_clip must be > 0, got {}", self.heatmap_clip)));
        }
        if let Some(cps) = &self.checkpoints {
            if let Some(bad) = cps.iter().find(|t| **t > self.schedule.total_iters) {
                return Err(Error::Config(format!("checkpoint {bad} beyond T = {}", self.schedule.total_iters)));
            }
        }
        let spec = self.spec();
        let limit = 360.0 / spec.n.max(1) as f64;
        for policy in [spec.delta_alpha, self.correction.delta_alpha] {
            if !(policy.upper() < limit) {
                return Err(Error::OverlapViolation {
                    delta_alpha: policy.upper(),
                    limit,
                    n: spec.n,
                });
            }
        }
        crate::rig::rig_with_offset(&spec, policy_probe(spec.delta_alpha))?;
        Ok(())
    }

    pub fn spec(&self) -> RigSpec {
        self.rig.spec()
    }

    pub fn checkpoint_list(&self) -> Vec<usize> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| vec![0, self.schedule.total_iters])
    }

    pub fn settings(&self) -> CorrectionSettings {
        CorrectionSettings {
            schedule: self.schedule,
            correction: self.correction.clone(),
            filter: self.filter,
            huber: self.huber,
            checkpoints: self.checkpoint_list(),
        }
    }

    /// Renders the first view set and injects the configured infidelity.
    pub fn problem(&self) -> Result<CorrectionProblem> {
        let rig = build_rig(&self.spec(), self.correction.seed)?;
        CorrectionProblem::with_infidelity(self.scene.clone(), rig, &self.infidelity)
    }
}

fn policy_probe(policy: DeltaAlpha) -> f64 {
    match policy {
        DeltaAlpha::Fixed(v) => v,
        DeltaAlpha::Uniform { lo, hi } => 0.5 * (lo + hi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "scene": {"primitives": [{"shape": "sphere", "center": [0, 0, 0], "radius": 1.0}]},
        "rig": {"n": 4, "delta_alpha": "fixed:20", "width": 16, "height": 16},
        "infidelity": {"kind": "concavity", "mask_fraction": 0.15, "magnitude": 0.3}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.schedule, Schedule::default());
        assert_eq!(cfg.checkpoint_list(), vec![0, 600]);
        assert_eq!(cfg.correction.delta_alpha, DeltaAlpha::RANDOM);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replacen("\"n\": 4", "\"n\": 4, \"bogus_key\": 1", 1);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn overlap_checked_for_policy() {
        let text = MINIMAL.replacen("\"n\": 4", "\"n\": 16", 1);
        assert!(ExperimentConfig::from_json(&text).is_err(), "uniform:10:30 exceeds 22.5 deg");
    }
}
