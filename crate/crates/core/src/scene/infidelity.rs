//! Depth corruptions that mimic geometric infidelities of an optimized field:
//! dents pushed into a surface, and surfaces that are missing so the ray
//! sees the back wall instead.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{DepthMap, OpacityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfidelityKind {
    Concavity,
    MissingSurface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfidelitySpec {
    pub kind: InfidelityKind,
    /// Fraction of the foreground covered by the blob, in (0, 1].
    pub mask_fraction: f64,
    /// Depth offset for concavities, scene units.
    pub magnitude: f64,
    #[serde(default)]
    pub seed: u64,
}

/// A corrupted depth map and the pixels that were changed.
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub depth: DepthMap,
    pub mask: Vec<bool>,
}

impl Corruption {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Chessboard distance of each foreground pixel to the nearest background
/// pixel or image border.
fn distance_to_background(fg: &[bool], w: usize, h: usize) -> Vec<u32> {
    let mut dist = vec![u32::MAX; w * h];
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let border = x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            if !fg[i] {
                dist[i] = 0;
                queue.push_back(i);
            } else if border {
                dist[i] = 1;
                queue.push_back(i);
            }
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if dist[j] > dist[i] + 1 {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    dist
}

/// Eden growth from deep interior seeds until `target` pixels are covered.
fn grow_blob(fg: &[bool], w: usize, h: usize, target: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let dist = distance_to_background(fg, w, h);
    let mut blob = vec![false; w * h];
    let mut count = 0;
    while count < target {
        let free: Vec<usize> = (0..w * h).filter(|&i| fg[i] && !blob[i]).collect();
        let Some(deepest) = free.iter().map(|&i| dist[i]).max() else {
            break;
        };
        let cutoff = deepest.div_ceil(2).max(1);
        let candidates: Vec<usize> = free.into_iter().filter(|&i| dist[i] >= cutoff).collect();
        let seed = candidates[rng.random_range(0..candidates.len())];
        let mut frontier = vec![seed];
        while count < target && !frontier.is_empty() {
            let i = frontier.swap_remove(rng.random_range(0..frontier.len()));
            if blob[i] {
                continue;
            }
            blob[i] = true;
            count += 1;
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            frontier.extend(neighbours.into_iter().flatten().filter(|&j| fg[j] && !blob[j]));
        }
    }
    blob
}

/// Returns a corrupted copy of `depth`; the input is left untouched.
///
/// `back_depth` supplies the second surface for [`InfidelityKind::MissingSurface`].
pub fn inject_infidelity(
    depth: &DepthMap,
    opacity: &OpacityMap,
    spec: &InfidelitySpec,
    back_depth: Option<&DepthMap>,
) -> Result<Corruption> {
    if !(spec.mask_fraction > 0.0 && spec.mask_fraction <= 1.0) {
        return Err(Error::InvalidInfidelity(format!(
            "mask_fraction {} outside (0, 1]",
            spec.mask_fraction
        )));
    }
    if !(spec.magnitude > 0.0) || !spec.magnitude.is_finite() {
        return Err(Error::InvalidInfidelity(format!("magnitude {} must be > 0", spec.magnitude)));
    }
    let (w, h) = (depth.width, depth.height);
    if opacity.width != w || opacity.height != h {
        return Err(Error::InvalidInfidelity("opacity dims differ from depth".into()));
    }
    let fg: Vec<bool> = depth
        .values
        .iter()
        .zip(&opacity.values)
        .map(|(d, o)| *o > 0.0 && DepthMap::is_hit(*d))
        .collect();
    let n_fg = fg.iter().filter(|f| **f).count();
    if n_fg == 0 {
        return Err(Error::EmptyForeground);
    }
    let target = ((spec.mask_fraction * n_fg as f64).round() as usize).clamp(1, n_fg);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mask = grow_blob(&fg, w, h, target, &mut rng);

    let mut out = depth.clone();
    match spec.kind {
        InfidelityKind::Concavity => {
            let delta = spec.magnitude as f32;
            for (v, m) in out.values.iter_mut().zip(&mask) {
                if *m {
                    *v += delta;
                }
            }
        }
        InfidelityKind::MissingSurface => {
            let back = back_depth.ok_or_else(|| {
                Error::InvalidInfidelity("missing-surface needs the back-surface depth".into())
            })?;
            if back.width != w || back.height != h {
                return Err(Error::InvalidInfidelity("back depth dims differ".into()));
            }
            for ((v, m), b) in out.values.iter_mut().zip(&mask).zip(&back.values) {
                if *m {
                    *v = if DepthMap::is_hit(*b) { *b } else { DepthMap::NO_HIT };
                }
            }
        }
    }
    Ok(Corruption { depth: out, mask })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(size: usize, radius: f64) -> (DepthMap, OpacityMap) {
        let c = (size as f64 - 1.0) / 2.0;
        let mut d = DepthMap::filled(size, size, DepthMap::NO_HIT);
        let mut o = OpacityMap::filled(size, size, 0.0);
        for y in 0..size {
            for x in 0..size {
                if ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt() <= radius {
                    let i = y * size + x;
                    d.values[i] = 1.5 + 0.01 * x as f32;
                    o.values[i] = 1.0;
                }
            }
        }
        (d, o)
    }

    fn concavity(fraction: f64, seed: u64) -> InfidelitySpec {
        InfidelitySpec {
            kind: InfidelityKind::Concavity,
            mask_fraction: fraction,
            magnitude: 0.3,
            seed,
        }
    }

    fn is_connected(mask: &[bool], w: usize) -> bool {
        let start = mask.iter().position(|m| *m).unwrap();
        let mut seen = vec![false; mask.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut n = 0;
        while let Some(i) = stack.pop() {
            n += 1;
            let (x, y) = (i % w, i / w);
            for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
                if nx < w && ny < mask.len() / w {
                    let j = ny * w + nx;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        n == mask.iter().filter(|m| **m).count()
    }

    #[test]
    fn concavity_shifts_exactly_the_blob() {
        let (d, o) = disk(32, 12.0);
        let n_fg = o.values.iter().filter(|v| **v > 0.0).count();
        let fraction = 100.0 / n_fg as f64;
        let c = inject_infidelity(&d, &o, &concavity(fraction, 3), None).unwrap();
        assert_eq!(c.count(), 100);
        assert!(is_connected(&c.mask, 32));
        for i in 0..d.values.len() {
            if c.mask[i] {
                assert_eq!(c.depth.values[i], d.values[i] + 0.3f32);
            } else {
                assert_eq!(c.depth.values[i].to_bits(), d.values[i].to_bits());
            }
        }
    }

    #[test]
    fn full_fraction_covers_foreground() {
        let (d, o) = disk(20, 7.0);
        let c = inject_infidelity(&d, &o, &concavity(1.0, 0), None).unwrap();
        for i in 0..d.values.len() {
            assert_eq!(c.mask[i], o.values[i] > 0.0);
        }
    }

    #[test]
    fn missing_surface_uses_back_depth() {
        let (d, o) = disk(20, 7.0);
        let back = DepthMap::filled(20, 20, 4.0);
        let spec = InfidelitySpec {
            kind: InfidelityKind::MissingSurface,
            ..concavity(0.2, 1)
        };
        let c = inject_infidelity(&d, &o, &spec, Some(&back)).unwrap();
        assert!(c.count() > 0);
        for i in 0..d.values.len() {
            if c.mask[i] {
                assert_eq!(c.depth.values[i], 4.0);
            }
        }
        assert!(inject_infidelity(&d, &o, &spec, None).is_err());
    }

    #[test]
    fn empty_foreground_and_bad_params() {
        let d = DepthMap::filled(8, 8, DepthMap::NO_HIT);
        let o = OpacityMap::filled(8, 8, 0.0);
        assert!(matches!(inject_infidelity(&d, &o, &concavity(0.5, 0), None), Err(Error::EmptyForeground)));
        let (d, o) = disk(8, 3.0);
        assert!(inject_infidelity(&d, &o, &concavity(0.0, 0), None).is_err());
        assert!(inject_infidelity(&d, &o, &concavity(1.5, 0), None).is_err());
    }
}
