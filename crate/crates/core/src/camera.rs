//! Pinhole cameras and two-view epipolar geometry.
//!
//! Conventions: world-to-camera pose `x_cam = R * x_world + t`, camera axes
//! x right, y down, z forward. Integer pixel coordinates address pixel
//! centers, `(u, v) = (column, row)`.

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Depths at or below this are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Shared pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square pixels, principal point on the image center, horizontal field of view in degrees.
    pub fn from_fov(width: usize, height: usize, fov_deg: f64) -> Self {
        let f = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) * 0.5,
            cy: (height as f64 - 1.0) * 0.5,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidCamera("principal point not finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image dims must be >= 1".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Intrinsics for the same view resampled to `width x height` with
    /// corner pixel centers aligned (the mapping used by bilinear resampling).
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let sx = align_corners_scale(self.width, width);
        let sy = align_corners_scale(self.height, height);
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }
}

pub(crate) fn align_corners_scale(from: usize, to: usize) -> f64 {
    if from <= 1 || to <= 1 {
        1.0
    } else {
        (to - 1) as f64 / (from - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct Camera {
    intrinsics: Intrinsics,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        intrinsics: Intrinsics,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        intrinsics.validate()?;
        let err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(err < ORTHONORMAL_TOL) {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |R^T R - I| = {err:e})"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::InvalidCamera("rotation is a reflection".into()));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("translation not finite".into()));
        }
        Ok(Self {
            intrinsics,
            rotation,
            translation,
        })
    }

    /// Camera at `eye` looking at `target`. Falls back to another up vector
    /// when the viewing direction is parallel to `up`.
    pub fn look_at(
        intrinsics: Intrinsics,
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye coincides with target".into()))?;
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            let alt = if forward.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::y()
            };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(intrinsics, rotation, translation)
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Orbit azimuth of the camera center around the world z axis, degrees.
    pub fn azimuth_deg(&self) -> f64 {
        let c = self.center();
        c.y.atan2(c.x).to_degrees()
    }

    pub fn world_to_camera(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Pixel coordinates and camera-frame depth of a world point.
    pub fn project(&self, point: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
        let pc = self.world_to_camera(point);
        if !(pc.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { z: pc.z });
        }
        Ok((self.camera_to_pixel(&pc), pc.z))
    }

    pub(crate) fn camera_to_pixel(&self, pc: &Vector3<f64>) -> Vector2<f64> {
        let k = &self.intrinsics;
        Vector2::new(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy)
    }

    /// World point at camera-frame depth `depth` along the ray through `pixel`.
    pub fn unproject(&self, pixel: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::InvalidDepth(depth));
        }
        let pc = self.pixel_to_camera_ray(pixel) * depth;
        Ok(self.rotation.transpose() * (pc - self.translation))
    }

    /// Camera-frame ray through `pixel`, scaled so that its z component is 1.
    pub(crate) fn pixel_to_camera_ray(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.intrinsics;
        Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0)
    }

    /// Unit world-space direction of the ray through `pixel`.
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        (self.rotation.transpose() * self.pixel_to_camera_ray(pixel)).normalize()
    }

    /// Same pose, intrinsics resampled to a new resolution.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        Self {
            intrinsics: self.intrinsics.rescaled(width, height),
            rotation: self.rotation,
            translation: self.translation,
        }
    }
}

/// Pose of `dst` relative to `src`: `x_dst = R * x_src + t`.
pub fn relative_pose(src: &Camera, dst: &Camera) -> (Matrix3<f64>, Vector3<f64>) {
    let r = dst.rotation * src.rotation.transpose();
    let t = dst.translation - r * src.translation;
    (r, t)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Fundamental matrix with `x_dst^T F x_src = 0`.
pub fn fundamental_matrix(src: &Camera, dst: &Camera) -> Result<Matrix3<f64>> {
    let baseline = (src.center() - dst.center()).norm();
    let scale = 1.0 + src.center().norm().max(dst.center().norm());
    if baseline <= 1e-12 * scale {
        return Err(Error::DegenerateEpipolar("camera centers coincide"));
    }
    let (r, t) = relative_pose(src, dst);
    let essential = skew(&t) * r;
    Ok(dst.intrinsics.inverse_matrix().transpose() * essential * src.intrinsics.inverse_matrix())
}

/// Image line `a*u + b*v + c = 0` with `a^2 + b^2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line {
    pub fn new(a: f64, b: f64, c: f64) -> Option<Self> {
        let n = a.hypot(b);
        if !(n > 0.0) || !n.is_finite() || !c.is_finite() {
            return None;
        }
        Some(Self {
            a: a / n,
            b: b / n,
            c: c / n,
        })
    }

    pub fn signed_distance(&self, pixel: &Vector2<f64>) -> f64 {
        self.a * pixel.x + self.b * pixel.y + self.c
    }

    pub fn distance(&self, pixel: &Vector2<f64>) -> f64 {
        self.signed_distance(pixel).abs()
    }
}

/// Epipolar line in `dst` of a pixel observed in `src`.
pub fn epipolar_line(src: &Camera, dst: &Camera, pixel: &Vector2<f64>) -> Result<Line> {
    let f = fundamental_matrix(src, dst)?;
    epipolar_line_from_fundamental(&f, pixel)
}

pub(crate) fn epipolar_line_from_fundamental(
    f: &Matrix3<f64>,
    pixel: &Vector2<f64>,
) -> Result<Line> {
    let l = f * Vector3::new(pixel.x, pixel.y, 1.0);
    Line::new(l.x, l.y, l.z).ok_or(Error::DegenerateEpipolar("pixel maps to the epipole"))
}

/// Orthogonal projection of `pixel` onto `line`, and the distance moved.
pub fn point_to_line_projection(line: &Line, pixel: &Vector2<f64>) -> (Vector2<f64>, f64) {
    let s = line.signed_distance(pixel);
    let foot = Vector2::new(pixel.x - s * line.a, pixel.y - s * line.b);
    (foot, s.abs())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: [f64; 9],
    translation: [f64; 3],
    width: usize,
    height: usize,
}

impl From<Camera> for CameraRecord {
    fn from(cam: Camera) -> Self {
        let r = cam.rotation;
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        let k = cam.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation,
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            width: k.width,
            height: k.height,
        }
    }
}

impl TryFrom<CameraRecord> for Camera {
    type Error = Error;

    fn try_from(rec: CameraRecord) -> Result<Self> {
        let intrinsics = Intrinsics {
            fx: rec.fx,
            fy: rec.fy,
            cx: rec.cx,
            cy: rec.cy,
            width: rec.width,
            height: rec.height,
        };
        Camera::new(
            intrinsics,
            Matrix3::from_row_slice(&rec.rotation),
            Vector3::from(rec.translation),
        )
    }
}
