//! Dense 4D correlation volumes between two views.
//!
//! The volume is stored as a square `N x N` matrix with `N = h * w`:
//! entry `(p, q, r, s)` lives at `(p * w + q) * N + (r * w + s)`, where
//! `(p, q)` is the source pixel (row, column) and `(r, s)` the target pixel.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{FeatureLayer, FeatureStack};

/// Largest side of a dense volume, per axis.
pub const MAX_DENSE_SIDE: usize = 64;

/// What the volume's entries currently represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreRange {
    /// Sum of `layers` cosine similarities, in `[-layers, layers]`.
    Cosine { layers: usize },
    /// Cosine sums mapped through `v -> (v + L) / 2L` into `[0, 1]`.
    Unit { layers: usize },
    /// Non-negative scores of unspecified scale (after filtering or smoothing).
    NonNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationVolume {
    pub h: usize,
    pub w: usize,
    pub values: Vec<f64>,
    /// (source view, target view)
    pub pair: (usize, usize),
    pub range: ScoreRange,
}

impl CorrelationVolume {
    pub fn new(h: usize, w: usize, values: Vec<f64>, range: ScoreRange) -> Self {
        let n = h * w;
        assert_eq!(values.len(), n * n, "volume size mismatch");
        Self {
            h,
            w,
            values,
            pair: (0, 0),
            range,
        }
    }

    pub fn with_pair(mut self, src: usize, dst: usize) -> Self {
        self.pair = (src, dst);
        self
    }

    /// Pixels per view.
    pub fn side(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.side();
        self.values[(p * self.w + q) * n + r * self.w + s]
    }

    /// Scores of one source pixel against every target pixel.
    pub fn source_slice(&self, src: usize) -> &[f64] {
        let n = self.side();
        &self.values[src * n..(src + 1) * n]
    }

    /// The same volume seen from the target view.
    pub fn transposed(&self) -> Self {
        let n = self.side();
        let mut out = vec![0.0; n * n];
        for (i, row) in self.values.chunks_exact(n).enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[j * n + i] = *v;
            }
        }
        Self {
            h: self.h,
            w: self.w,
            values: out,
            pair: (self.pair.1, self.pair.0),
            range: self.range,
        }
    }

    /// Affine map of cosine sums onto `[0, 1]`; other ranges are returned as-is.
    pub fn to_unit_range(&self) -> Self {
        match self.range {
            ScoreRange::Cosine { layers } => {
                let l = layers.max(1) as f64;
                let values = self.values.iter().map(|v| (v + l) / (2.0 * l)).collect();
                Self {
                    values,
                    range: ScoreRange::Unit { layers },
                    ..self.clone()
                }
            }
            _ => self.clone(),
        }
    }
}

fn check_capacity(h: usize, w: usize) -> Result<()> {
    if h == 0 || w == 0 || h > MAX_DENSE_SIDE || w > MAX_DENSE_SIDE {
        return Err(Error::Capacity { h, w });
    }
    Ok(())
}

fn resample_layer(layer: &FeatureLayer, h_out: usize, w_out: usize) -> FeatureLayer {
    if layer.height == h_out && layer.width == w_out {
        return layer.clone();
    }
    let c = layer.channels;
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out <= 1 || n_in <= 1 {
            let x = (n_in as f64 - 1.0) * 0.5;
            let x0 = x.floor() as usize;
            return (x0, (x0 + 1).min(n_in - 1), x - x0 as f64);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let x0 = (x.floor() as usize).min(n_in - 1);
        let x1 = (x0 + 1).min(n_in - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut data = vec![0f32; h_out * w_out * c];
    for y in 0..h_out {
        let (y0, y1, ty) = coord(y, h_out, layer.height);
        for x in 0..w_out {
            let (x0, x1, tx) = coord(x, w_out, layer.width);
            let (a, b) = (layer.pixel(y0, x0), layer.pixel(y0, x1));
            let (cc, d) = (layer.pixel(y1, x0), layer.pixel(y1, x1));
            let out = &mut data[(y * w_out + x) * c..][..c];
            for ch in 0..c {
                let top = a[ch] as f64 * (1.0 - tx) + b[ch] as f64 * tx;
                let bottom = cc[ch] as f64 * (1.0 - tx) + d[ch] as f64 * tx;
                out[ch] = (top * (1.0 - ty) + bottom * ty) as f32;
            }
        }
    }
    FeatureLayer {
        layer_id: layer.layer_id,
        height: h_out,
        width: w_out,
        channels: c,
        data,
    }
}

/// Bilinear resampling of every layer to `h_out x w_out`, corners aligned.
pub fn interpolate_features(stack: &FeatureStack, h_out: usize, w_out: usize) -> Result<FeatureStack> {
    if stack.layers.is_empty() {
        return Err(Error::EmptyInput("feature stack has no layers"));
    }
    if h_out == 0 || w_out == 0 {
        return Err(Error::InvalidSpec("output resolution must be >= 1".into()));
    }
    Ok(FeatureStack {
        layers: stack
            .layers
            .iter()
            .map(|l| resample_layer(l, h_out, w_out))
            .collect(),
    })
}

/// Per-pixel L2-normalized features of one layer at the common resolution.
/// Zero vectors stay zero, so they score 0 against everything.
#[derive(Debug, Clone)]
pub struct NormalizedLayer {
    pub layer_id: u32,
    matrix: Array2<f64>,
}

/// Features of one view prepared for correlation at a fixed resolution.
#[derive(Debug, Clone)]
pub struct NormalizedFeatures {
    pub h: usize,
    pub w: usize,
    pub layers: Vec<NormalizedLayer>,
}

impl NormalizedFeatures {
    pub fn new(stack: &FeatureStack, h: usize, w: usize) -> Result<Self> {
        check_capacity(h, w)?;
        let resampled = interpolate_features(stack, h, w)?;
        let layers = resampled
            .layers
            .iter()
            .map(|layer| {
                let c = layer.channels;
                let mut matrix = Array2::<f64>::zeros((h * w, c));
                for (i, mut row) in matrix.rows_mut().into_iter().enumerate() {
                    let px = &layer.data[i * c..(i + 1) * c];
                    let norm = px.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        for (o, v) in row.iter_mut().zip(px) {
                            *o = *v as f64 / norm;
                        }
                    }
                }
                NormalizedLayer {
                    layer_id: layer.layer_id,
                    matrix,
                }
            })
            .collect();
        Ok(Self { h, w, layers })
    }

    fn ids(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.layer_id).collect()
    }
}

/// Sum over layers of per-layer cosine similarity volumes.
pub fn correlate(src: &NormalizedFeatures, dst: &NormalizedFeatures) -> Result<CorrelationVolume> {
    if (src.h, src.w) != (dst.h, dst.w) {
        return Err(Error::InvalidSpec("source and target resolutions differ".into()));
    }
    let (mut a, mut b) = (src.ids(), dst.ids());
    a.sort_unstable();
    b.sort_unstable();
    if a != b || a.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::LayerMismatch {
            src: src.ids(),
            dst: dst.ids(),
        });
    }
    let n = src.h * src.w;
    let mut total = Array2::<f64>::zeros((n, n));
    for ls in &src.layers {
        let ld = dst
            .layers
            .iter()
            .find(|l| l.layer_id == ls.layer_id)
            .expect("layer sets checked");
        if ls.matrix.ncols() != ld.matrix.ncols() {
            return Err(Error::LayerMismatch {
                src: src.ids(),
                dst: dst.ids(),
            });
        }
        ndarray::linalg::general_mat_mul(1.0, &ls.matrix, &ld.matrix.t(), 1.0, &mut total);
    }
    let (values, _) = total.into_raw_vec_and_offset();
    Ok(CorrelationVolume::new(
        src.h,
        src.w,
        values,
        ScoreRange::Cosine {
            layers: src.layers.len(),
        },
    ))
}

/// Correlation of two feature stacks at the common resolution `h x w`.
pub fn build_correlation(src: &FeatureStack, dst: &FeatureStack, h: usize, w: usize) -> Result<CorrelationVolume> {
    let (mut a, mut b) = (src.layer_ids(), dst.layer_ids());
    a.sort_unstable();
    b.sort_unstable();
    if a != b {
        return Err(Error::LayerMismatch {
            src: src.layer_ids(),
            dst: dst.layer_ids(),
        });
    }
    correlate(&NormalizedFeatures::new(src, h, w)?, &NormalizedFeatures::new(dst, h, w)?)
}

/// Soft mutual nearest-neighbour filtering.
///
/// Each score is multiplied by its ratios to the best score in its target
/// column and in its source row. Cosine volumes are first mapped to `[0, 1]`.
pub fn mutual_nn_filter(vol: &CorrelationVolume) -> Result<CorrelationVolume> {
    let vol = vol.to_unit_range();
    if vol.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::NegativeScores);
    }
    let n = vol.side();
    let mut col_max = vec![0.0f64; n];
    for row in vol.values.chunks_exact(n) {
        for (m, v) in col_max.iter_mut().zip(row) {
            *m = m.max(*v);
        }
    }
    let values: Vec<f64> = vol
        .values
        .par_chunks_exact(n)
        .flat_map_iter(|row| {
            let row_max = row.iter().copied().fold(0.0, f64::max);
            let col_max = &col_max;
            row.iter().zip(col_max.iter()).map(move |(v, cm)| {
                if row_max > 0.0 && *cm > 0.0 {
                    v * (v / cm) * (v / row_max)
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(CorrelationVolume {
        values,
        range: ScoreRange::NonNegative,
        ..vol
    })
}

/// Boundary handling and weighting of the uniform 4D smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingNorm {
    /// Mean of the `k^4` taps with mirrored (half-sample symmetric) borders.
    /// Preserves constants and the global mean.
    #[default]
    Reflect,
    /// Zero padding, mean over in-bounds taps only. Preserves constants.
    InBounds,
    /// Zero padding, every tap weighted `1 / k^3`.
    CubeWeight,
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m >= n {
        2 * n - 1 - m
    } else {
        m
    }
}

fn smooth_axis(input: &[f64], len: usize, stride: usize, k: usize, norm: SmoothingNorm) -> Vec<f64> {
    let r = (k / 2) as isize;
    let block = len * stride;
    let mut out = vec![0.0; input.len()];
    out.par_chunks_mut(block)
        .zip(input.par_chunks(block))
        .for_each(|(ob, ib)| {
            let mut line = vec![0.0; len];
            for b in 0..stride {
                for (l, v) in line.iter_mut().enumerate() {
                    *v = ib[l * stride + b];
                }
                for l in 0..len as isize {
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for j in l - r..=l + r {
                        match norm {
                            SmoothingNorm::Reflect => acc += line[reflect(j, len)],
                            _ if j >= 0 && j < len as isize => {
                                acc += line[j as usize];
                                count += 1;
                            }
                            _ => {}
                        }
                    }
                    ob[l as usize * stride + b] = match norm {
                        SmoothingNorm::Reflect => acc / k as f64,
                        SmoothingNorm::InBounds => acc / count as f64,
                        SmoothingNorm::CubeWeight => acc,
                    };
                }
            }
        });
    out
}

/// Uniform `k^4` box smoothing with mirrored borders.
pub fn smooth_4d(vol: &CorrelationVolume, k: usize) -> Result<CorrelationVolume> {
    smooth_4d_with(vol, k, SmoothingNorm::default())
}

pub fn smooth_4d_with(vol: &CorrelationVolume, k: usize, norm: SmoothingNorm) -> Result<CorrelationVolume> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidKernel(k));
    }
    if k == 1 && norm != SmoothingNorm::CubeWeight {
        return Ok(vol.clone());
    }
    let (h, w) = (vol.h, vol.w);
    let n = h * w;
    // Axes (p, q, r, s) with their strides.
    let axes = [(h, w * n), (w, n), (h, w), (w, 1)];
    let mut values = vol.values.clone();
    for (len, stride) in axes {
        values = smooth_axis(&values, len, stride, k, norm);
    }
    if norm == SmoothingNorm::CubeWeight {
        let scale = 1.0 / (k as f64).powi(3);
        values.iter_mut().for_each(|v| *v *= scale);
    }
    let range = match vol.range {
        ScoreRange::Cosine { layers } => ScoreRange::Cosine { layers },
        _ => ScoreRange::NonNegative,
    };
    Ok(CorrelationVolume {
        values,
        range,
        ..vol.clone()
    })
}

/// Best target of one source pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMatch {
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
    pub conf: f64,
}

/// Argmax correspondence for every source pixel, row-major over sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCorrespondenceField {
    pub h: usize,
    pub w: usize,
    pub pair: (usize, usize),
    pub matches: Vec<RawMatch>,
}

impl RawCorrespondenceField {
    pub fn get(&self, p: usize, q: usize) -> &RawMatch {
        &self.matches[p * self.w + q]
    }
}

/// Argmax over target pixels; ties go to the smallest row-major target index.
pub fn extract_correspondences(vol: &CorrelationVolume) -> RawCorrespondenceField {
    let n = vol.side();
    let w = vol.w;
    let matches = vol
        .values
        .par_chunks_exact(n)
        .enumerate()
        .map(|(src, row)| {
            let mut best = 0;
            for (j, v) in row.iter().enumerate().skip(1) {
                if *v > row[best] {
                    best = j;
                }
            }
            RawMatch {
                p: src / w,
                q: src % w,
                r: best / w,
                s: best % w,
                conf: row[best],
            }
        })
        .collect();
    RawCorrespondenceField {
        h: vol.h,
        w,
        pair: vol.pair,
        matches,
    }
}

/// Knobs of the correlation-to-matches pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    #[serde(default = "default_true")]
    pub mutual_nn: bool,
    /// 4D smoothing kernel size; 1 disables smoothing.
    #[serde(default = "default_kernel")]
    pub k: usize,
    #[serde(default)]
    pub smoothing: SmoothingNorm,
}

fn default_true() -> bool {
    true
}

fn default_kernel() -> usize {
    3
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            mutual_nn: true,
            k: default_kernel(),
            smoothing: SmoothingNorm::default(),
        }
    }
}

/// correlation -> mutual-NN -> smoothing. Returns the refined volume.
pub fn refine_volume(vol: &CorrelationVolume, cfg: &CorrelationConfig) -> Result<CorrelationVolume> {
    let filtered = if cfg.mutual_nn {
        mutual_nn_filter(vol)?
    } else {
        vol.to_unit_range()
    };
    smooth_4d_with(&filtered, cfg.k, cfg.smoothing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layer(id: u32, h: usize, w: usize, c: usize, data: Vec<f32>) -> FeatureLayer {
        FeatureLayer::new(id, h, w, c, data).unwrap()
    }

    fn random_stack(rng: &mut ChaCha8Rng, ids: &[u32], h: usize, w: usize, c: usize) -> FeatureStack {
        FeatureStack::new(
            ids.iter()
                .map(|id| layer(*id, h, w, c, (0..h * w * c).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect(),
        )
        .unwrap()
    }

    fn one_hot(h: usize, w: usize) -> FeatureStack {
        let n = h * w;
        let mut data = vec![0f32; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        FeatureStack::new(vec![layer(0, h, w, n, data)]).unwrap()
    }

    #[test]
    fn identity_resample_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_stack(&mut rng, &[1, 2], 5, 4, 3);
        assert_eq!(interpolate_features(&s, 5, 4).unwrap(), s);
    }

    #[test]
    fn constant_layer_stays_constant() {
        let s = FeatureStack::new(vec![layer(0, 3, 2, 2, vec![0.75; 12])]).unwrap();
        let out = interpolate_features(&s, 7, 5).unwrap();
        assert!(out.layers[0].data.iter().all(|v| *v == 0.75));
    }

    #[test]
    fn bilinear_center_value() {
        let s = FeatureStack::new(vec![layer(0, 2, 2, 1, vec![0.0, 1.0, 2.0, 3.0])]).unwrap();
        let out = interpolate_features(&s, 3, 3).unwrap();
        assert_eq!(out.layers[0].pixel(1, 1)[0], 1.5);
        assert_eq!(out.layers[0].pixel(0, 1)[0], 0.5);
        assert_eq!(out.layers[0].pixel(2, 2)[0], 3.0);
    }

    #[test]
    fn empty_stack_rejected() {
        let s = FeatureStack { layers: vec![] };
        assert!(matches!(interpolate_features(&s, 2, 2), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn one_hot_volume_is_identity() {
        let s = one_hot(3, 3);
        let v = build_correlation(&s, &s, 3, 3).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(v.values[i * 9 + j], expect);
            }
        }
        let field = extract_correspondences(&v);
        for m in &field.matches {
            assert_eq!((m.p, m.q), (m.r, m.s));
            assert_eq!(m.conf, 1.0);
        }
    }

    #[test]
    fn duplicated_layer_doubles_volume() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_stack(&mut rng, &[0], 3, 3, 4);
        let b = random_stack(&mut rng, &[0], 3, 3, 4);
        let dup = |s: &FeatureStack| {
            let mut l2 = s.layers[0].clone();
            l2.layer_id = 1;
            FeatureStack::new(vec![s.layers[0].clone(), l2]).unwrap()
        };
        let single = build_correlation(&a, &b, 3, 3).unwrap();
        let double = build_correlation(&dup(&a), &dup(&b), 3, 3).unwrap();
        for (s, d) in single.values.iter().zip(&double.values) {
            assert!((2.0 * s - d).abs() < 1e-12);
        }
        assert_eq!(double.range, ScoreRange::Cosine { layers: 2 });
    }

    #[test]
    fn zero_feature_scores_zero() {
        let s = FeatureStack::new(vec![layer(0, 1, 2, 2, vec![0.0, 0.0, 1.0, 0.0])]).unwrap();
        let v = build_correlation(&s, &s, 1, 2).unwrap();
        assert_eq!(v.values, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn mismatched_layers_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_stack(&mut rng, &[6, 9], 2, 2, 3);
        let b = random_stack(&mut rng, &[6], 2, 2, 3);
        assert!(matches!(build_correlation(&a, &b, 2, 2), Err(Error::LayerMismatch { .. })));
        assert!(matches!(build_correlation(&a, &a, 65, 2), Err(Error::Capacity { .. })));
    }

    #[test]
    fn mutual_nn_toy_volume() {
        // Two pixels per view (1x2 images).
        // Source 0 scores [0.8, 0.4]; source 1 scores [0.2, 0.5].
        let v = CorrelationVolume::new(1, 2, vec![0.8, 0.4, 0.2, 0.5], ScoreRange::NonNegative);
        let out = mutual_nn_filter(&v).unwrap();
        // (0,0): best of row and column -> unchanged.
        assert_eq!(out.values[0], 0.8);
        // (0,1): row ratio 0.4/0.8, column ratio 0.4/0.5.
        assert!((out.values[1] - 0.4 * (0.4 / 0.8) * (0.4 / 0.5)).abs() < 1e-15);
        // (1,0): row ratio 0.2/0.5, column ratio 0.2/0.8.
        assert!((out.values[2] - 0.2 * (0.2 / 0.5) * (0.2 / 0.8)).abs() < 1e-15);
        // (1,1): best of both.
        assert_eq!(out.values[3], 0.5);
    }

    #[test]
    fn mutual_nn_maps_cosine_scores() {
        let v = CorrelationVolume::new(1, 2, vec![1.0, -1.0, -1.0, 1.0], ScoreRange::Cosine { layers: 1 });
        let out = mutual_nn_filter(&v).unwrap();
        assert_eq!(out.values, vec![1.0, 0.0, 0.0, 1.0]);
        let neg = CorrelationVolume::new(1, 1, vec![-0.5], ScoreRange::NonNegative);
        assert!(matches!(mutual_nn_filter(&neg), Err(Error::NegativeScores)));
    }

    #[test]
    fn mutual_nn_zero_denominator() {
        let v = CorrelationVolume::new(1, 2, vec![0.0; 4], ScoreRange::NonNegative);
        assert_eq!(mutual_nn_filter(&v).unwrap().values, vec![0.0; 4]);
    }

    #[test]
    fn smoothing_kernel_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = CorrelationVolume::new(2, 3, (0..36).map(|_| rng.random()).collect(), ScoreRange::NonNegative);
        assert_eq!(smooth_4d(&v, 1).unwrap(), v);
        assert!(matches!(smooth_4d(&v, 2), Err(Error::InvalidKernel(2))));
    }

    #[test]
    fn smoothing_center_is_mean_of_81() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..81).map(|_| rng.random()).collect();
        let mean = values.iter().sum::<f64>() / 81.0;
        let v = CorrelationVolume::new(3, 3, values, ScoreRange::NonNegative);
        for norm in [SmoothingNorm::Reflect, SmoothingNorm::InBounds] {
            let out = smooth_4d_with(&v, 3, norm).unwrap();
            assert!((out.get(1, 1, 1, 1) - mean).abs() < 1e-12);
        }
        let cube = smooth_4d_with(&v, 3, SmoothingNorm::CubeWeight).unwrap();
        assert!((cube.get(1, 1, 1, 1) - 3.0 * mean).abs() < 1e-12);
    }

    #[test]
    fn in_bounds_norm_preserves_constants() {
        let v = CorrelationVolume::new(3, 4, vec![0.25; 144], ScoreRange::NonNegative);
        let out = smooth_4d_with(&v, 5, SmoothingNorm::InBounds).unwrap();
        assert!(out.values.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn argmax_ties_pick_first() {
        let v = CorrelationVolume::new(1, 3, vec![0.1, 0.5, 0.5, 0.7, 0.7, 0.7, 0.0, 0.0, 0.9], ScoreRange::NonNegative);
        let f = extract_correspondences(&v);
        assert_eq!((f.matches[0].r, f.matches[0].s), (0, 1));
        assert_eq!((f.matches[1].r, f.matches[1].s), (0, 0));
        assert_eq!((f.matches[2].r, f.matches[2].s), (0, 2));
        assert_eq!(f.matches[2].conf, 0.9);
    }

    #[test]
    fn transpose_swaps_pair() {
        let v = CorrelationVolume::new(1, 2, vec![1.0, 2.0, 3.0, 4.0], ScoreRange::NonNegative).with_pair(0, 4);
        let t = v.transposed();
        assert_eq!(t.values, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(t.pair, (4, 0));
        assert_eq!(t.transposed(), v);
    }

    proptest! {
        #[test]
        fn argmax_permutation_equivariance(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (3, 3);
            let n = h * w;
            let values: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let v = CorrelationVolume::new(h, w, values.clone(), ScoreRange::NonNegative);
            let mut permuted = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    permuted[i * n + perm[j]] = values[i * n + j];
                }
            }
            let vp = CorrelationVolume::new(h, w, permuted, ScoreRange::NonNegative);
            let (a, b) = (extract_correspondences(&v), extract_correspondences(&vp));
            for (ma, mb) in a.matches.iter().zip(&b.matches) {
                prop_assert_eq!(perm[ma.r * w + ma.s], mb.r * w + mb.s);
            }
        }

        #[test]
        fn mutual_nn_contracts(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = CorrelationVolume::new(2, 3, (0..36).map(|_| rng.random()).collect(), ScoreRange::NonNegative);
            let out = mutual_nn_filter(&v).unwrap();
            for (o, i) in out.values.iter().zip(&v.values) {
                prop_assert!(*o >= 0.0 && *o <= *i);
            }
        }
    }
}
