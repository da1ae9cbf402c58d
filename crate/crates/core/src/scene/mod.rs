//! Procedural signed-distance scenes standing in for a radiance field.

mod features;
mod infidelity;
mod render;

pub use features::{synthesize_features, FeatureLayer, FeatureSpec, FeatureStack, LayerSpec};
pub use infidelity::{inject_infidelity, Corruption, InfidelityKind, InfidelitySpec};
pub use render::{render_back_depth, render_depth_opacity, HIT_EPSILON, MAX_STEPS};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        blend: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        blend: f64,
    },
    RoundedBox {
        center: [f64; 3],
        half_extents: [f64; 3],
        radius: f64,
        #[serde(default)]
        blend: f64,
    },
    /// Torus in the plane orthogonal to world z.
    Torus {
        center: [f64; 3],
        major: f64,
        minor: f64,
        #[serde(default)]
        blend: f64,
    },
}

fn box_sdf(p: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let q = p.abs() - b;
    let outside = q.map(|v| v.max(0.0)).norm();
    outside + q.max().min(0.0)
}

impl Primitive {
    pub fn center(&self) -> Vector3<f64> {
        let c = match self {
            Primitive::Sphere { center, .. }
            | Primitive::Box { center, .. }
            | Primitive::RoundedBox { center, .. }
            | Primitive::Torus { center, .. } => center,
        };
        Vector3::from(*c)
    }

    pub fn blend(&self) -> f64 {
        match self {
            Primitive::Sphere { blend, .. }
            | Primitive::Box { blend, .. }
            | Primitive::RoundedBox { blend, .. }
            | Primitive::Torus { blend, .. } => *blend,
        }
    }

    pub fn sdf(&self, x: &Vector3<f64>) -> f64 {
        let p = x - self.center();
        match self {
            Primitive::Sphere { radius, .. } => p.norm() - radius,
            Primitive::Box { half_extents, .. } => box_sdf(p, Vector3::from(*half_extents)),
            Primitive::RoundedBox {
                half_extents,
                radius,
                ..
            } => box_sdf(p, Vector3::from(*half_extents).add_scalar(-radius)) - radius,
            Primitive::Torus { major, minor, .. } => {
                let ring = p.xy().norm() - major;
                ring.hypot(p.z) - minor
            }
        }
    }

    /// Radius of a sphere around the world origin enclosing the primitive.
    fn bounding_radius(&self) -> f64 {
        let extent = match self {
            Primitive::Sphere { radius, .. } => *radius,
            Primitive::Box { half_extents, .. } | Primitive::RoundedBox { half_extents, .. } => {
                Vector3::from(*half_extents).norm()
            }
            Primitive::Torus { major, minor, .. } => major + minor,
        };
        self.center().norm() + extent
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidScene(msg.to_string()));
        if !self.center().iter().all(|v| v.is_finite()) {
            return bad("primitive center not finite");
        }
        if !(self.blend() >= 0.0) {
            return bad("blend radius must be >= 0");
        }
        match self {
            Primitive::Sphere { radius, .. } if !(*radius > 0.0) => bad("sphere radius must be > 0"),
            Primitive::Box { half_extents, .. } if !half_extents.iter().all(|v| *v > 0.0) => {
                bad("box half extents must be > 0")
            }
            Primitive::RoundedBox {
                half_extents,
                radius,
                ..
            } if !(*radius >= 0.0 && half_extents.iter().all(|v| v >= radius && *v > 0.0)) => {
                bad("rounded box needs 0 <= radius <= half extents")
            }
            Primitive::Torus { major, minor, .. } if !(*minor > 0.0 && major > minor) => {
                bad("torus needs major > minor > 0")
            }
            _ => Ok(()),
        }
    }
}

/// Polynomial smooth minimum; equals `min(a, b)` for `k == 0`.
fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k * 0.25
}

/// Union of primitives. Each primitive is blended into the running union with its own radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfScene {
    pub primitives: Vec<Primitive>,
}

impl SdfScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        let scene = Self { primitives };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::InvalidScene("scene has no primitives".into()));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Unit sphere at the origin.
    pub fn unit_sphere() -> Self {
        Self {
            primitives: vec![Primitive::Sphere {
                center: [0.0; 3],
                radius: 1.0,
                blend: 0.0,
            }],
        }
    }

    /// A sphere with a box resting against it.
    pub fn sphere_and_box() -> Self {
        Self {
            primitives: vec![
                Primitive::Sphere {
                    center: [0.0, 0.0, 0.1],
                    radius: 0.7,
                    blend: 0.0,
                },
                Primitive::Box {
                    center: [0.15, -0.1, -0.55],
                    half_extents: [0.6, 0.5, 0.25],
                    blend: 0.0,
                },
            ],
        }
    }

    pub fn sdf(&self, x: &Vector3<f64>) -> f64 {
        let mut iter = self.primitives.iter();
        let Some(first) = iter.next() else {
            return f64::INFINITY;
        };
        iter.fold(first.sdf(x), |acc, prim| smooth_min(acc, prim.sdf(x), prim.blend()))
    }

    /// Radius of an origin-centered sphere outside of which the SDF is positive.
    pub fn bounding_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.bounding_radius() + p.blend())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed_scene() -> SdfScene {
        SdfScene::new(vec![
            Primitive::Sphere {
                center: [0.2, 0.0, 0.0],
                radius: 0.5,
                blend: 0.0,
            },
            Primitive::Box {
                center: [-0.3, 0.1, 0.2],
                half_extents: [0.2, 0.3, 0.4],
                blend: 0.0,
            },
            Primitive::RoundedBox {
                center: [0.0, -0.5, -0.2],
                half_extents: [0.3, 0.2, 0.2],
                radius: 0.05,
                blend: 0.0,
            },
            Primitive::Torus {
                center: [0.0, 0.0, -0.6],
                major: 0.5,
                minor: 0.1,
                blend: 0.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn primitive_distances() {
        let s = Primitive::Sphere {
            center: [0.0; 3],
            radius: 1.0,
            blend: 0.0,
        };
        assert_eq!(s.sdf(&Vector3::new(3.0, 0.0, 0.0)), 2.0);
        let b = Primitive::Box {
            center: [0.0; 3],
            half_extents: [1.0, 1.0, 1.0],
            blend: 0.0,
        };
        assert_eq!(b.sdf(&Vector3::new(2.0, 0.0, 0.0)), 1.0);
        assert_eq!(b.sdf(&Vector3::new(0.5, 0.0, 0.0)), -0.5);
        let t = Primitive::Torus {
            center: [0.0; 3],
            major: 1.0,
            minor: 0.25,
            blend: 0.0,
        };
        assert!((t.sdf(&Vector3::new(1.0, 0.0, 0.0)) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn smooth_union_is_below_min() {
        let a = 0.1;
        let b = 0.12;
        assert!(smooth_min(a, b, 0.2) < a.min(b));
        assert_eq!(smooth_min(a, b, 0.0), a);
    }

    #[test]
    fn scene_json_roundtrip() {
        let scene = mixed_scene();
        let json = serde_json::to_string(&scene).unwrap();
        assert!(json.contains("\"shape\":\"rounded_box\""));
        let back: SdfScene = serde_json::from_str(&json).unwrap();
        assert_eq!(back, scene);
        assert!(serde_json::from_str::<SdfScene>(r#"{"primitives":[],"extra":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn hard_union_is_one_lipschitz(
            a in prop::array::uniform3(-2.0f64..2.0),
            b in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let scene = mixed_scene();
            let (x, y) = (Vector3::from(a), Vector3::from(b));
            prop_assert!((scene.sdf(&x) - scene.sdf(&y)).abs() <= (x - y).norm() + 1e-12);
        }

        #[test]
        fn positive_outside_bound(
            dir in prop::array::uniform3(-1.0f64..1.0),
            extra in 1e-3f64..5.0,
        ) {
            let d = Vector3::from(dir);
            prop_assume!(d.norm() > 1e-3);
            let scene = mixed_scene();
            let x = d.normalize() * (scene.bounding_radius() + extra);
            prop_assert!(scene.sdf(&x) > 0.0);
        }
    }
}
