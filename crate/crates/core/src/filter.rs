//! Post-processing of raw argmax matches into trusted correspondences.
//!
//! Stage order per match: source mask, target mask, epipolar distance
//! threshold followed by projection of the target onto its epipolar line,
//! then bounds and mask check of the projected target.

use nalgebra::Vector2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::camera::{epipolar_line_from_fundamental, fundamental_matrix, point_to_line_projection, Camera};
use crate::correlation::RawCorrespondenceField;
use crate::error::{Error, Result};
use crate::maps::OpacityMap;

pub const STAGE_SOURCE_MASK: u8 = 1;
pub const STAGE_TARGET_MASK: u8 = 1 << 1;
pub const STAGE_EPIPOLAR: u8 = 1 << 2;
pub const STAGE_BOUNDS: u8 = 1 << 3;
pub const ALL_STAGES: u8 = STAGE_SOURCE_MASK | STAGE_TARGET_MASK | STAGE_EPIPOLAR | STAGE_BOUNDS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Largest accepted distance to the epipolar line, pixels. `"inf"` disables the drop.
    #[serde(default = "default_tau", serialize_with = "ser_tau", deserialize_with = "de_tau")]
    pub tau_epi: f64,
    #[serde(default = "default_edge_threshold")]
    pub opacity_edge_threshold: f64,
    #[serde(default = "default_pool_kernel")]
    pub pool_kernel: usize,
}

fn default_tau() -> f64 {
    2.0
}

fn default_edge_threshold() -> f64 {
    0.99
}

fn default_pool_kernel() -> usize {
    3
}

fn ser_tau<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_tau<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Str(s) => Err(serde::de::Error::custom(format!("invalid tau_epi {s:?}"))),
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau_epi: default_tau(),
            opacity_edge_threshold: default_edge_threshold(),
            pool_kernel: default_pool_kernel(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_epi > 0.0) {
            return Err(Error::Config(format!("tau_epi must be > 0, got {}", self.tau_epi)));
        }
        if !(self.opacity_edge_threshold > 0.0 && self.opacity_edge_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "opacity_edge_threshold must lie in (0, 1], got {}",
                self.opacity_edge_threshold
            )));
        }
        if self.pool_kernel == 0 || self.pool_kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("pool_kernel must be odd, got {}", self.pool_kernel)));
        }
        Ok(())
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<bool>,
}

impl Mask {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![true; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.values[y * self.width + x]
    }

    /// Mask value at the pixel nearest to a continuous position; false outside the image.
    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        if !in_bounds(pixel, self.height, self.width) {
            return false;
        }
        let x = ((pixel.x + 0.5).floor() as usize).min(self.width - 1);
        let y = ((pixel.y + 0.5).floor() as usize).min(self.height - 1);
        self.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

#[inline]
fn in_bounds(pixel: &Vector2<f64>, h: usize, w: usize) -> bool {
    pixel.x.is_finite()
        && pixel.y.is_finite()
        && pixel.x >= 0.0
        && pixel.y >= 0.0
        && pixel.x < w as f64
        && pixel.y < h as f64
}

/// Non-edge foreground: average-pooled opacity at or above the edge threshold.
/// The pooling window ignores taps outside the image.
pub fn foreground_mask(opacity: &OpacityMap, cfg: &FilterConfig) -> Mask {
    let (w, h) = (opacity.width, opacity.height);
    let r = (cfg.pool_kernel / 2) as isize;
    let mut values = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if opacity.get(x, y) <= 0.0 {
                continue;
            }
            let (mut sum, mut count) = (0.0f64, 0usize);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        sum += opacity.get(nx as usize, ny as usize) as f64;
                        count += 1;
                    }
                }
            }
            values[y * w + x] = sum / count as f64 >= cfg.opacity_edge_threshold;
        }
    }
    Mask {
        width: w,
        height: h,
        values,
    }
}

/// One surviving correspondence. Pixels are `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: [usize; 2],
    pub target: Vector2<f64>,
    pub conf: f64,
    pub stages: u8,
}

impl Correspondence {
    pub fn source_pixel(&self) -> Vector2<f64> {
        Vector2::new(self.source[0] as f64, self.source[1] as f64)
    }
}

/// Matches remaining after each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub input: usize,
    pub source_mask: usize,
    pub target_mask: usize,
    pub epipolar: usize,
    pub bounds: usize,
}

impl StageCounts {
    pub fn as_array(&self) -> [usize; 5] {
        [self.input, self.source_mask, self.target_mask, self.epipolar, self.bounds]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pub pair: (usize, usize),
    pub h: usize,
    pub w: usize,
    pub matches: Vec<Correspondence>,
    pub counts: StageCounts,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Filters a raw argmax field. Cameras are rescaled to the field resolution if needed.
pub fn apply_filters(
    raw: &RawCorrespondenceField,
    cams: (&Camera, &Camera),
    masks: (&Mask, &Mask),
    cfg: &FilterConfig,
) -> Result<CorrespondenceSet> {
    let (h, w) = (raw.h, raw.w);
    for m in [masks.0, masks.1] {
        if (m.height, m.width) != (h, w) {
            return Err(Error::InvalidSpec(format!(
                "mask {}x{} does not match correspondence field {h}x{w}",
                m.height, m.width
            )));
        }
    }
    let rescale = |c: &Camera| {
        if (c.height(), c.width()) == (h, w) {
            c.clone()
        } else {
            c.rescaled(w, h)
        }
    };
    let (src_cam, dst_cam) = (rescale(cams.0), rescale(cams.1));
    let f = fundamental_matrix(&src_cam, &dst_cam)?;

    let mut counts = StageCounts {
        input: raw.matches.len(),
        ..Default::default()
    };
    let mut matches = Vec::new();
    for m in &raw.matches {
        if !masks.0.get(m.q, m.p) {
            continue;
        }
        counts.source_mask += 1;
        if !masks.1.get(m.s, m.r) {
            continue;
        }
        counts.target_mask += 1;
        let source = Vector2::new(m.q as f64, m.p as f64);
        let Ok(line) = epipolar_line_from_fundamental(&f, &source) else {
            continue;
        };
        let (foot, distance) = point_to_line_projection(&line, &Vector2::new(m.s as f64, m.r as f64));
        if distance > cfg.tau_epi {
            continue;
        }
        counts.epipolar += 1;
        if !masks.1.contains(&foot) {
            continue;
        }
        counts.bounds += 1;
        matches.push(Correspondence {
            source: [m.q, m.p],
            target: foot,
            conf: m.conf,
            stages: ALL_STAGES,
        });
    }
    Ok(CorrespondenceSet {
        pair: raw.pair,
        h,
        w,
        matches,
        counts,
    })
}

/// Validity of reprojected points: finite and inside `[0, w) x [0, h)`.
pub fn reprojection_bounds_filter(corr_nerf: &[Option<Vector2<f64>>], h: usize, w: usize) -> Vec<bool> {
    corr_nerf
        .iter()
        .map(|p| p.is_some_and(|p| in_bounds(&p, h, w)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{epipolar_line, Intrinsics};
    use crate::correlation::RawMatch;
    use nalgebra::{Matrix3, Vector3};

    fn opacity_square(size: usize, lo: usize, hi: usize) -> OpacityMap {
        let mut o = OpacityMap::filled(size, size, 0.0);
        for y in lo..hi {
            for x in lo..hi {
                o.values[y * size + x] = 1.0;
            }
        }
        o
    }

    #[test]
    fn mask_interior_and_edges() {
        let o = opacity_square(10, 2, 8);
        let m = foreground_mask(&o, &FilterConfig::default());
        assert!(m.get(4, 4));
        // Bordering background: pooled <= 6/9.
        assert!(!m.get(2, 4));
        assert!(!m.get(7, 7));
        assert!(!m.get(0, 0));
        assert_eq!(m.count(), 16);
    }

    #[test]
    fn pooled_value_just_below_threshold_is_edge() {
        // One background neighbour in a 3x3 window: 8/9 < 0.99.
        let mut o = OpacityMap::filled(5, 5, 1.0);
        o.values[0] = 0.0;
        let m = foreground_mask(&o, &FilterConfig::default());
        assert!(!m.get(1, 1));
        assert!(m.get(3, 3));
        let lax = FilterConfig {
            opacity_edge_threshold: 0.85,
            ..Default::default()
        };
        assert!(foreground_mask(&o, &lax).get(1, 1));
    }

    #[test]
    fn all_zero_opacity_gives_empty_mask() {
        let m = foreground_mask(&OpacityMap::filled(6, 6, 0.0), &FilterConfig::default());
        assert_eq!(m.count(), 0);
    }

    fn stereo_pair(size: usize) -> (Camera, Camera) {
        let k = Intrinsics::from_fov(size, size, 60.0);
        let a = Camera::new(k, Matrix3::identity(), Vector3::zeros()).unwrap();
        let b = Camera::new(k, Matrix3::identity(), Vector3::new(-0.3, 0.0, 0.0)).unwrap();
        (a, b)
    }

    fn field(size: usize, matches: Vec<RawMatch>) -> RawCorrespondenceField {
        RawCorrespondenceField {
            h: size,
            w: size,
            pair: (0, 1),
            matches,
        }
    }

    fn rm(p: usize, q: usize, r: usize, s: usize) -> RawMatch {
        RawMatch { p, q, r, s, conf: 0.7 }
    }

    #[test]
    fn epipolar_threshold_and_projection() {
        let (a, b) = stereo_pair(16);
        let full = Mask::full(16, 16);
        // Rectified: epipolar line of row p is row p.
        let raw = field(16, vec![rm(5, 5, 8, 3), rm(5, 6, 6, 3), rm(7, 7, 7, 4)]);
        let set = apply_filters(&raw, (&a, &b), (&full, &full), &FilterConfig::default()).unwrap();
        assert_eq!(set.len(), 2, "3 px off the line must be dropped");
        let m = &set.matches[0];
        assert_eq!(m.source, [6, 5]);
        assert!((m.target - Vector2::new(3.0, 5.0)).norm() < 1e-9);
        assert_eq!(m.stages, ALL_STAGES);
        assert_eq!(m.conf, 0.7);
        assert_eq!(set.counts.as_array(), [3, 3, 3, 2, 2]);
    }

    #[test]
    fn source_outside_mask_dropped_first() {
        let (a, b) = stereo_pair(8);
        let mut src_mask = Mask::full(8, 8);
        src_mask.values[2 * 8 + 3] = false;
        let raw = field(8, vec![rm(2, 3, 2, 1)]);
        let set = apply_filters(&raw, (&a, &b), (&src_mask, &Mask::full(8, 8)), &FilterConfig::default()).unwrap();
        assert!(set.is_empty());
        assert_eq!(set.counts.source_mask, 0);
    }

    #[test]
    fn infinite_tau_only_projects() {
        let k = Intrinsics::from_fov(12, 12, 60.0);
        let a = crate::rig::orbit_camera(k, 2.5, 0.0, 15.0).unwrap();
        let b = crate::rig::orbit_camera(k, 2.5, 20.0, 15.0).unwrap();
        let full = Mask::full(12, 12);
        let matches: Vec<RawMatch> = (0..144).map(|i| rm(i / 12, i % 12, (i * 7) % 12, (i * 5) % 12)).collect();
        let cfg = FilterConfig {
            tau_epi: f64::INFINITY,
            ..Default::default()
        };
        let set = apply_filters(&field(12, matches), (&a, &b), (&full, &full), &cfg).unwrap();
        assert_eq!(set.counts.epipolar, 144);
        for m in &set.matches {
            let line = epipolar_line(&a, &b, &m.source_pixel()).unwrap();
            assert!(line.distance(&m.target) < 1e-6);
        }
    }

    #[test]
    fn bounds_filter() {
        let pts = vec![
            Some(Vector2::new(-0.5, 3.0)),
            Some(Vector2::new(9.0, 7.0)),
            Some(Vector2::new(10.0, 3.0)),
            None,
            Some(Vector2::new(f64::NAN, 1.0)),
        ];
        assert_eq!(reprojection_bounds_filter(&pts, 8, 10), vec![false, true, false, false, false]);
    }

    #[test]
    fn config_json_keys() {
        let cfg: FilterConfig = serde_json::from_str(r#"{"tau_epi":"inf","opacity_edge_threshold":0.99,"pool_kernel":3}"#).unwrap();
        assert!(cfg.tau_epi.is_infinite());
        let back: FilterConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<FilterConfig>(r#"{"tau":2}"#).is_err());
        assert!(FilterConfig { pool_kernel: 4, ..Default::default() }.validate().is_err());
    }
}
