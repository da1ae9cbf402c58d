//! Synthetic per-view feature maps.
//!
//! Each layer embeds the 3D surface point seen by a pixel with a seeded
//! random Fourier map, `phi(x) = sqrt(2/C) * cos(W x + b)` with
//! `W ~ N(0, 1/bandwidth^2)`. The same embedding is shared by all views, so
//! two pixels that observe the same surface point get the same feature, and
//! the feature similarity falls off with 3D distance on the `bandwidth` scale.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::maps::DepthMap;

/// One dense feature map, laid out `[row][column][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLayer {
    pub layer_id: u32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureLayer {
    pub fn new(layer_id: u32, height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidSpec(format!(
                "layer {layer_id} has empty dims {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidSpec(format!(
                "layer {layer_id}: {} values for dims {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            layer_id,
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }
}

/// Multi-layer features of one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layers: Vec<FeatureLayer>,
}

impl FeatureStack {
    pub fn new(layers: Vec<FeatureLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::EmptyInput("feature stack has no layers"));
        }
        Ok(Self { layers })
    }

    pub fn layer_ids(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.layer_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub layer_id: u32,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Length scale of the embedding kernel, in scene units.
    pub bandwidth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FeatureSpec {
    /// Two layers at the render resolution and half of it: a sharp one and a
    /// coarse one with a wider kernel, tagged with upsampling-layer ids 9 and 6.
    pub fn two_layer(width: usize, height: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            layers: vec![
                LayerSpec {
                    layer_id: 6,
                    height: height.div_ceil(2),
                    width: width.div_ceil(2),
                    channels: 96,
                    bandwidth: 0.15,
                },
                LayerSpec {
                    layer_id: 9,
                    height,
                    width,
                    channels: 96,
                    bandwidth: 0.05,
                },
            ],
            noise_sigma,
            seed,
        }
    }
}

struct FourierEmbedding {
    frequencies: Vec<Vector3<f64>>,
    phases: Vec<f64>,
    scale: f64,
}

impl FourierEmbedding {
    fn new(channels: usize, bandwidth: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies = (0..channels)
            .map(|_| {
                let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                Vector3::from(v) / bandwidth
            })
            .collect();
        let phases = (0..channels)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        Self {
            frequencies,
            phases,
            scale: (2.0 / channels as f64).sqrt(),
        }
    }

    fn embed_into(&self, x: &Vector3<f64>, out: &mut [f32]) {
        for ((o, w), b) in out.iter_mut().zip(&self.frequencies).zip(&self.phases) {
            *o = (self.scale * (w.dot(x) + b).cos()) as f32;
        }
    }
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn camera_fingerprint(cam: &Camera) -> u64 {
    cam.rotation()
        .iter()
        .chain(cam.translation().iter())
        .fold(0xCBF2_9CE4_8422_2325, |acc, v| mix(acc, v.to_bits()))
}

fn background_value(channel: usize, channels: usize) -> f32 {
    let sign = if channel.is_multiple_of(2) { 1.0 } else { -1.0 };
    (sign / (channels as f64).sqrt()) as f32
}

/// Coordinate in a `fine`-sized axis of sample `i` on a `coarse`-sized axis, corners aligned.
fn align_corners(i: usize, coarse: usize, fine: usize) -> f64 {
    if coarse <= 1 {
        (fine as f64 - 1.0) * 0.5
    } else {
        i as f64 * (fine as f64 - 1.0) / (coarse as f64 - 1.0)
    }
}

/// Features for one view whose ground-truth depth is `depth`.
///
/// Hit pixels get `phi_l(X(p)) + N(0, noise_sigma^2)`, misses a constant
/// background vector. Coarser layers sample the surface at the
/// corner-aligned position of their pixel centers. Noise is seeded by
/// `spec.seed` and the camera pose, so reruns are bit-identical.
pub fn synthesize_features(cam: &Camera, depth: &DepthMap, spec: &FeatureSpec) -> Result<FeatureStack> {
    if spec.layers.is_empty() {
        return Err(Error::InvalidSpec("no layers requested".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::InvalidSpec(format!("noise_sigma {} must be >= 0", spec.noise_sigma)));
    }
    if depth.width != cam.width() || depth.height != cam.height() {
        return Err(Error::InvalidSpec("depth map dims differ from camera".into()));
    }
    let cam_key = camera_fingerprint(cam);
    let mut layers = Vec::with_capacity(spec.layers.len());
    for ls in &spec.layers {
        if ls.height > depth.height || ls.width > depth.width {
            return Err(Error::InvalidSpec(format!(
                "layer {} dims {}x{} exceed depth map {}x{}",
                ls.layer_id, ls.height, ls.width, depth.height, depth.width
            )));
        }
        if ls.height == 0 || ls.width == 0 || ls.channels == 0 || !(ls.bandwidth > 0.0) {
            return Err(Error::InvalidSpec(format!("layer {} has empty dims or bandwidth", ls.layer_id)));
        }
        let embedding = FourierEmbedding::new(ls.channels, ls.bandwidth, mix(spec.seed, ls.layer_id as u64));
        let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma validated");
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(spec.seed, ls.layer_id as u64), cam_key));
        let c = ls.channels;
        let mut data = vec![0f32; ls.height * ls.width * c];
        for y in 0..ls.height {
            let fy = align_corners(y, ls.height, depth.height);
            for x in 0..ls.width {
                let fx = align_corners(x, ls.width, depth.width);
                let d = depth.get(fx.round() as usize, fy.round() as usize);
                let out = &mut data[(y * ls.width + x) * c..][..c];
                if DepthMap::is_hit(d) {
                    let point = cam.unproject(&Vector2::new(fx, fy), d as f64)?;
                    embedding.embed_into(&point, out);
                    if spec.noise_sigma > 0.0 {
                        for v in out.iter_mut() {
                            *v += noise.sample(&mut rng) as f32;
                        }
                    }
                } else {
                    for (ch, v) in out.iter_mut().enumerate() {
                        *v = background_value(ch, c);
                    }
                }
            }
        }
        layers.push(FeatureLayer::new(ls.layer_id, ls.height, ls.width, c, data)?);
    }
    FeatureStack::new(layers)
}
