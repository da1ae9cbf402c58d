//! Render, feature, correlate and filter for view pairs.

use crate::camera::Camera;
use crate::correlation::{
    correlate, extract_correspondences, refine_volume, CorrelationConfig, NormalizedFeatures, RawCorrespondenceField,
};
use crate::error::Result;
use crate::filter::{apply_filters, foreground_mask, CorrespondenceSet, FilterConfig, Mask};
use crate::maps::{DepthMap, OpacityMap};
use crate::scene::{render_depth_opacity, synthesize_features, FeatureSpec, FeatureStack, SdfScene};

/// Everything the matcher needs from one rendered view.
#[derive(Debug, Clone)]
pub struct ViewObservation {
    pub camera: Camera,
    pub depth: DepthMap,
    pub opacity: OpacityMap,
    pub mask: Mask,
    pub features: FeatureStack,
    pub normalized: NormalizedFeatures,
}

/// Renders `camera` and synthesizes features at the camera resolution.
pub fn observe(scene: &SdfScene, camera: &Camera, spec: &FeatureSpec, filter: &FilterConfig) -> Result<ViewObservation> {
    let (depth, opacity) = render_depth_opacity(scene, camera)?;
    let features = synthesize_features(camera, &depth, spec)?;
    from_parts(camera.clone(), depth, opacity, features, filter)
}

/// Builds an observation from precomputed maps and features.
pub fn from_parts(
    camera: Camera,
    depth: DepthMap,
    opacity: OpacityMap,
    features: FeatureStack,
    filter: &FilterConfig,
) -> Result<ViewObservation> {
    let mask = foreground_mask(&opacity, filter);
    let normalized = NormalizedFeatures::new(&features, opacity.height, opacity.width)?;
    Ok(ViewObservation {
        camera,
        depth,
        opacity,
        mask,
        features,
        normalized,
    })
}

/// Raw and filtered matches of one pair in both directions.
#[derive(Debug, Clone)]
pub struct PairMatches {
    pub raw_forward: RawCorrespondenceField,
    pub raw_backward: RawCorrespondenceField,
    pub forward: CorrespondenceSet,
    pub backward: CorrespondenceSet,
}

/// One volume per pair; the reverse direction reads the transposed volume.
pub fn match_pair(
    src: &ViewObservation,
    dst: &ViewObservation,
    ids: (usize, usize),
    corr: &CorrelationConfig,
    filter: &FilterConfig,
) -> Result<PairMatches> {
    let vol = correlate(&src.normalized, &dst.normalized)?.with_pair(ids.0, ids.1);
    let refined = refine_volume(&vol, corr)?;
    let raw_forward = extract_correspondences(&refined);
    let raw_backward = extract_correspondences(&refined.transposed());
    let forward = apply_filters(&raw_forward, (&src.camera, &dst.camera), (&src.mask, &dst.mask), filter)?;
    let backward = apply_filters(&raw_backward, (&dst.camera, &src.camera), (&dst.mask, &src.mask), filter)?;
    Ok(PairMatches {
        raw_forward,
        raw_backward,
        forward,
        backward,
    })
}
