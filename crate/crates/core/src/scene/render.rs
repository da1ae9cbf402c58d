use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::SdfScene;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::maps::{DepthMap, OpacityMap};

/// A ray has hit the surface once the SDF drops below this.
pub const HIT_EPSILON: f64 = 1e-5;
/// Sphere-tracing step cap per ray segment.
pub const MAX_STEPS: usize = 256;

const BOUND_MARGIN: f64 = 1e-3;

/// Parametric interval where a ray is inside the origin-centered sphere of radius `r`.
fn sphere_interval(origin: &Vector3<f64>, dir: &Vector3<f64>, r: f64) -> Option<(f64, f64)> {
    let b = origin.dot(dir);
    let c = origin.norm_squared() - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = (-b - s, -b + s);
    (t1 > 0.0).then_some((t0.max(0.0), t1))
}

/// Sphere-traces one ray; returns the hit parameter along the unit direction.
pub(crate) fn trace_first_hit(
    scene: &SdfScene,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    bound: f64,
) -> Option<f64> {
    let (mut t, t_exit) = sphere_interval(origin, dir, bound)?;
    for _ in 0..MAX_STEPS {
        let d = scene.sdf(&(origin + dir * t));
        if d < HIT_EPSILON {
            return Some(t);
        }
        t += d;
        if t > t_exit {
            return None;
        }
    }
    None
}

/// Continues a ray from its first hit through the solid to the point where it exits.
pub(crate) fn trace_exit(
    scene: &SdfScene,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t_hit: f64,
) -> Option<f64> {
    // Push just past the entry surface.
    let mut t = t_hit + 10.0 * HIT_EPSILON;
    for _ in 0..MAX_STEPS {
        let d = scene.sdf(&(origin + dir * t));
        if d >= 0.0 {
            // Grazing hit: the ray never entered the solid.
            return (d < HIT_EPSILON).then_some(t);
        }
        if -d < HIT_EPSILON {
            return Some(t);
        }
        t += -d;
    }
    None
}

fn check_camera(scene: &SdfScene, cam: &Camera) -> Result<f64> {
    let bound = scene.bounding_radius() + BOUND_MARGIN;
    let distance = cam.center().norm();
    if distance <= bound {
        return Err(Error::InsideScene { distance, bound });
    }
    Ok(bound)
}

fn camera_depth(cam: &Camera, point: &Vector3<f64>) -> f32 {
    cam.world_to_camera(point).z as f32
}

/// Ray-marched depth and hard opacity (1 on hits, 0 on misses).
pub fn render_depth_opacity(scene: &SdfScene, cam: &Camera) -> Result<(DepthMap, OpacityMap)> {
    let bound = check_camera(scene, cam)?;
    let (w, h) = (cam.width(), cam.height());
    let origin = cam.center();
    let depths: Vec<f32> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let px = Vector2::new((i % w) as f64, (i / w) as f64);
            let dir = cam.ray_direction(&px);
            match trace_first_hit(scene, &origin, &dir, bound) {
                Some(t) => camera_depth(cam, &(origin + dir * t)),
                None => DepthMap::NO_HIT,
            }
        })
        .collect();
    let opacity = depths
        .iter()
        .map(|d| if DepthMap::is_hit(*d) { 1.0 } else { 0.0 })
        .collect();
    Ok((DepthMap::new(w, h, depths), OpacityMap::new(w, h, opacity)))
}

/// Depth of the surface behind the first hit, i.e. where each ray leaves the solid.
pub fn render_back_depth(scene: &SdfScene, cam: &Camera) -> Result<DepthMap> {
    let bound = check_camera(scene, cam)?;
    let (w, h) = (cam.width(), cam.height());
    let origin = cam.center();
    let depths = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let px = Vector2::new((i % w) as f64, (i / w) as f64);
            let dir = cam.ray_direction(&px);
            trace_first_hit(scene, &origin, &dir, bound)
                .and_then(|t| trace_exit(scene, &origin, &dir, t))
                .map_or(DepthMap::NO_HIT, |t| camera_depth(cam, &(origin + dir * t)))
        })
        .collect();
    Ok(DepthMap::new(w, h, depths))
}
