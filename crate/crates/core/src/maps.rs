//! Per-pixel depth and opacity rasters, stored row-major.

use serde::{Deserialize, Serialize};

/// Camera-frame depth per pixel; rays that hit nothing hold [`DepthMap::NO_HIT`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl DepthMap {
    pub const NO_HIT: f32 = f32::INFINITY;

    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), width * height, "depth map size mismatch");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[self.index(x, y)]
    }

    #[inline]
    pub fn is_hit(value: f32) -> bool {
        value.is_finite() && value > 0.0
    }

    pub fn hit_count(&self) -> usize {
        self.values.iter().filter(|v| Self::is_hit(**v)).count()
    }
}

/// Accumulated opacity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpacityMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl OpacityMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), width * height, "opacity map size mismatch");
        debug_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }
}
