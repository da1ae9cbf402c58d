//! Depth reprojection and the confidence-weighted Huber correspondence loss.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{relative_pose, Camera, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::filter::CorrespondenceSet;
use crate::maps::DepthMap;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HuberConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub reduction: Reduction,
}

fn default_delta() -> f64 {
    1.0
}

impl Default for HuberConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            reduction: Reduction::Sum,
        }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!("huber delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Huber penalty of the Euclidean norm of `residual`.
pub fn huber(residual: &Vector2<f64>, delta: f64) -> f64 {
    let rho = residual.norm();
    if rho <= delta {
        0.5 * rho * rho
    } else {
        delta * (rho - 0.5 * delta)
    }
}

/// Gradient of [`huber`] with respect to the residual.
pub fn huber_grad(residual: &Vector2<f64>, delta: f64) -> Vector2<f64> {
    let rho = residual.norm();
    if rho <= delta {
        *residual
    } else {
        residual * (delta / rho)
    }
}

/// A reprojected source pixel and its derivative with respect to source depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reprojection {
    pub pixel: Vector2<f64>,
    pub d_pixel_d_depth: Vector2<f64>,
}

/// Reprojection along one source ray: `x_dst(Z) = Z * a + b` in the target camera frame.
#[derive(Debug, Clone, Copy)]
struct RayMap {
    a: Vector3<f64>,
    b: Vector3<f64>,
}

struct PairGeometry {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    dst: Camera,
    src: Camera,
}

impl PairGeometry {
    fn new(src: &Camera, dst: &Camera) -> Self {
        let (rotation, translation) = relative_pose(src, dst);
        Self {
            rotation,
            translation,
            dst: dst.clone(),
            src: src.clone(),
        }
    }

    fn ray(&self, pixel: &Vector2<f64>) -> RayMap {
        RayMap {
            a: self.rotation * self.src.pixel_to_camera_ray(pixel),
            b: self.translation,
        }
    }

    fn reproject(&self, pixel: &Vector2<f64>, depth: f64) -> Option<Reprojection> {
        if !(depth > 0.0) || !depth.is_finite() {
            return None;
        }
        let ray = self.ray(pixel);
        let x = ray.a * depth + ray.b;
        if !(x.z > MIN_DEPTH) {
            return None;
        }
        let k = self.dst.intrinsics();
        let pixel = self.dst.camera_to_pixel(&x);
        let z2 = x.z * x.z;
        let d = Vector2::new(
            k.fx * (ray.a.x * x.z - x.x * ray.a.z) / z2,
            k.fy * (ray.a.y * x.z - x.y * ray.a.z) / z2,
        );
        (pixel.iter().all(|v| v.is_finite())).then_some(Reprojection {
            pixel,
            d_pixel_d_depth: d,
        })
    }
}

/// Reprojects one source pixel at an explicit depth.
pub fn reproject_pixel(cam_src: &Camera, cam_dst: &Camera, pixel: &Vector2<f64>, depth: f64) -> Option<Reprojection> {
    PairGeometry::new(cam_src, cam_dst).reproject(pixel, depth)
}

/// Reprojection of the listed `(x, y)` source pixels into `cam_dst`.
/// `None` marks a missing depth, a point behind the target camera or a non-finite result.
pub fn reproject_correspondences(
    depth_src: &DepthMap,
    cam_src: &Camera,
    cam_dst: &Camera,
    pixels: &[[usize; 2]],
) -> Vec<Option<Reprojection>> {
    let geom = PairGeometry::new(cam_src, cam_dst);
    pixels
        .par_iter()
        .map(|&[x, y]| {
            let d = depth_src.get(x, y);
            if !DepthMap::is_hit(d) {
                return None;
            }
            geom.reproject(&Vector2::new(x as f64, y as f64), d as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchLoss {
    pub source: [usize; 2],
    pub residual: [f64; 2],
    pub huber: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub n_active: usize,
    pub per_match: Vec<MatchLoss>,
    #[serde(skip)]
    pub grad_depth: DepthGradient,
}

/// Per-pixel `dL/d(depth)` of the source view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DepthGradient {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthGradient {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Loss of a filtered set against reprojections aligned with `set.matches`.
/// Reprojections outside the `set.h x set.w` image are treated as invalid.
pub fn corr_loss(set: &CorrespondenceSet, corr_nerf: &[Option<Reprojection>], cfg: &HuberConfig) -> Result<LossReport> {
    cfg.validate()?;
    if corr_nerf.len() != set.matches.len() {
        return Err(Error::InvalidSpec(format!(
            "{} reprojections for {} matches",
            corr_nerf.len(),
            set.matches.len()
        )));
    }
    let (h, w) = (set.h, set.w);
    let terms: Vec<Option<(MatchLoss, f64)>> = set
        .matches
        .par_iter()
        .zip(corr_nerf.par_iter())
        .map(|(m, rep)| {
            let rep = rep.as_ref()?;
            let p = rep.pixel;
            if !(p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64) {
                return None;
            }
            let residual = m.target - p;
            let value = huber(&residual, cfg.delta);
            // The residual moves opposite to the reprojection.
            let grad = -m.conf * huber_grad(&residual, cfg.delta).dot(&rep.d_pixel_d_depth);
            Some((
                MatchLoss {
                    source: m.source,
                    residual: [residual.x, residual.y],
                    huber: value,
                    weight: m.conf,
                },
                grad,
            ))
        })
        .collect();

    let mut total = 0.0;
    let mut grad_depth = DepthGradient::zeros(w, h);
    let mut per_match = Vec::new();
    for (term, grad) in terms.into_iter().flatten() {
        total += term.weight * term.huber;
        grad_depth.values[term.source[1] * w + term.source[0]] += grad;
        per_match.push(term);
    }
    let n_active = per_match.len();
    if cfg.reduction == Reduction::Mean && n_active > 0 {
        let scale = 1.0 / n_active as f64;
        total *= scale;
        grad_depth.values.iter_mut().for_each(|g| *g *= scale);
    }
    Ok(LossReport {
        total,
        n_active,
        per_match,
        grad_depth,
    })
}

/// Reprojects the set's source pixels with `depth_src` and evaluates [`corr_loss`].
pub fn pair_loss(
    set: &CorrespondenceSet,
    depth_src: &DepthMap,
    cam_src: &Camera,
    cam_dst: &Camera,
    cfg: &HuberConfig,
) -> Result<LossReport> {
    let pixels: Vec<[usize; 2]> = set.matches.iter().map(|m| m.source).collect();
    let reps = reproject_correspondences(depth_src, cam_src, cam_dst, &pixels);
    corr_loss(set, &reps, cfg)
}
