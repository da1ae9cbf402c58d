//! Cross-view correspondence machinery for depth correction on synthetic
//! multi-view renders.
//!
//! The pipeline renders two interlinked orbit view sets of a signed-distance
//! scene, correlates per-view multi-layer features into dense 4D volumes,
//! filters the argmax matches with opacity, epipolar and bounds constraints,
//! and compares them against matches obtained by reprojecting rendered
//! depth. A confidence-weighted Huber loss on the disagreement, with an
//! analytic depth gradient, drives the correction of injected depth errors.

pub mod camera;
pub mod config;
pub mod correction;
pub mod correlation;
pub mod error;
pub mod filter;
pub mod io;
pub mod loss;
pub mod maps;
pub mod pipeline;
pub mod report;
pub mod rig;
pub mod scene;
pub mod schedule;

pub use error::{Error, Result};
