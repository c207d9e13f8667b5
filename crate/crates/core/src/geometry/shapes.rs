//! Synthetic closed surfaces sampled uniformly by area. These stand in for
//! scanned datasets at desk scale: five analytic classes with randomizable
//! proportions, deterministic for a fixed seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{normalize, PointCloud};
use crate::rng::rng_from_seed;
use crate::vec3::Vec3;

/// The five synthetic shape classes, in label order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Torus,
    Box,
    Cylinder,
    Cone,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Torus,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
    ];

    pub fn label(self) -> usize {
        match self {
            ShapeKind::Sphere => 0,
            ShapeKind::Torus => 1,
            ShapeKind::Box => 2,
            ShapeKind::Cylinder => 3,
            ShapeKind::Cone => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Torus => "torus",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
        }
    }
}

/// Analytic surface parameters (pre-normalization units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShapeParams {
    /// Unit sphere.
    Sphere,
    /// Ring radius and tube radius.
    Torus { ring: f64, tube: f64 },
    /// Full edge lengths.
    Box { extents: [f64; 3] },
    /// Capped cylinder: radius and full height.
    Cylinder { radius: f64, height: f64 },
    /// Cone with a base disk: base radius and height (apex up).
    Cone { radius: f64, height: f64 },
}

impl ShapeParams {
    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeParams::Sphere => ShapeKind::Sphere,
            ShapeParams::Torus { .. } => ShapeKind::Torus,
            ShapeParams::Box { .. } => ShapeKind::Box,
            ShapeParams::Cylinder { .. } => ShapeKind::Cylinder,
            ShapeParams::Cone { .. } => ShapeKind::Cone,
        }
    }

    /// Canonical proportions used by [`generate_shape`].
    pub fn default_for(kind: ShapeKind) -> Self {
        match kind {
            ShapeKind::Sphere => ShapeParams::Sphere,
            ShapeKind::Torus => ShapeParams::Torus {
                ring: 1.0,
                tube: 0.4,
            },
            ShapeKind::Box => ShapeParams::Box {
                extents: [2.0, 1.4, 0.9],
            },
            ShapeKind::Cylinder => ShapeParams::Cylinder {
                radius: 0.5,
                height: 1.6,
            },
            ShapeKind::Cone => ShapeParams::Cone {
                radius: 0.7,
                height: 1.4,
            },
        }
    }

    /// Randomized proportions for dataset instances.
    pub fn randomized(kind: ShapeKind, rng: &mut ChaCha8Rng) -> Self {
        match kind {
            ShapeKind::Sphere => ShapeParams::Sphere,
            ShapeKind::Torus => ShapeParams::Torus {
                ring: 1.0,
                tube: rng.random_range(0.25..0.5),
            },
            ShapeKind::Box => ShapeParams::Box {
                extents: [
                    rng.random_range(1.2..2.2),
                    rng.random_range(0.8..1.6),
                    rng.random_range(0.5..1.1),
                ],
            },
            ShapeKind::Cylinder => ShapeParams::Cylinder {
                radius: rng.random_range(0.35..0.65),
                height: rng.random_range(1.2..2.0),
            },
            ShapeKind::Cone => ShapeParams::Cone {
                radius: rng.random_range(0.5..0.9),
                height: rng.random_range(1.0..1.8),
            },
        }
    }
}

/// `n` points sampled uniformly by area on the analytic surface, in the
/// surface's native (pre-normalization) coordinates.
pub fn sample_surface(params: ShapeParams, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..n).map(|_| sample_one(params, rng)).collect()
}

/// Analytic outward unit normal at a surface point (native coordinates).
/// Used by tests and diagnostics to build shell queries around the surface.
pub fn surface_normal(params: ShapeParams, p: Vec3) -> Vec3 {
    match params {
        ShapeParams::Sphere => p.normalized_or_zero(1e-12),
        ShapeParams::Torus { ring, .. } => {
            let radial = Vec3::new(p.x, p.y, 0.0).normalized_or_zero(1e-12);
            let tube_center = radial * ring;
            (p - tube_center).normalized_or_zero(1e-12)
        }
        ShapeParams::Box { extents } => {
            // Face whose plane the point is (numerically) on.
            let h = [extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0];
            let gaps = [
                h[0] - p.x.abs(),
                h[1] - p.y.abs(),
                h[2] - p.z.abs(),
            ];
            let axis = (0..3)
                .min_by(|&a, &b| gaps[a].partial_cmp(&gaps[b]).unwrap())
                .unwrap();
            let sign = p.component(axis).signum();
            match axis {
                0 => Vec3::new(sign, 0.0, 0.0),
                1 => Vec3::new(0.0, sign, 0.0),
                _ => Vec3::new(0.0, 0.0, sign),
            }
        }
        ShapeParams::Cylinder { radius, height } => {
            let h = height / 2.0;
            let side_gap = (radius - (p.x * p.x + p.y * p.y).sqrt()).abs();
            let cap_gap = (h - p.z.abs()).abs();
            if side_gap <= cap_gap {
                Vec3::new(p.x, p.y, 0.0).normalized_or_zero(1e-12)
            } else {
                Vec3::new(0.0, 0.0, p.z.signum())
            }
        }
        ShapeParams::Cone { radius, height } => {
            if (p.z).abs() < 1e-9 {
                return Vec3::new(0.0, 0.0, -1.0);
            }
            // Lateral surface: gradient of sqrt(x^2+y^2) - r*(1 - z/h).
            let radial = Vec3::new(p.x, p.y, 0.0).normalized_or_zero(1e-12);
            (radial + Vec3::new(0.0, 0.0, radius / height)).normalized_or_zero(1e-12)
        }
    }
}

fn sample_one(params: ShapeParams, rng: &mut ChaCha8Rng) -> Vec3 {
    match params {
        ShapeParams::Sphere => crate::rng::unit_sphere(rng),
        ShapeParams::Torus { ring, tube } => loop {
            let u: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let v: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            // Area element is proportional to ring + tube*cos(v); accept by
            // rejection so the sampling is uniform by area.
            let accept: f64 = rng.random_range(0.0..1.0);
            if accept * (ring + tube) <= ring + tube * v.cos() {
                let w = ring + tube * v.cos();
                return Vec3::new(w * u.cos(), w * u.sin(), tube * v.sin());
            }
        },
        ShapeParams::Box { extents } => {
            let h = [extents[0] / 2.0, extents[1] / 2.0, extents[2] / 2.0];
            let areas = [
                extents[1] * extents[2], // +-x faces
                extents[0] * extents[2], // +-y faces
                extents[0] * extents[1], // +-z faces
            ];
            let total = 2.0 * (areas[0] + areas[1] + areas[2]);
            let mut pick = rng.random_range(0.0..total);
            let mut face = 5;
            for f in 0..6 {
                let a = areas[f / 2];
                if pick < a {
                    face = f;
                    break;
                }
                pick -= a;
            }
            let axis = face / 2;
            let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
            let u = rng.random_range(-1.0..1.0);
            let v = rng.random_range(-1.0..1.0);
            match axis {
                0 => Vec3::new(sign * h[0], u * h[1], v * h[2]),
                1 => Vec3::new(u * h[0], sign * h[1], v * h[2]),
                _ => Vec3::new(u * h[0], v * h[1], sign * h[2]),
            }
        }
        ShapeParams::Cylinder { radius, height } => {
            let side = std::f64::consts::TAU * radius * height;
            let cap = std::f64::consts::PI * radius * radius;
            let pick = rng.random_range(0.0..side + 2.0 * cap);
            if pick < side {
                let u = rng.random_range(0.0..std::f64::consts::TAU);
                let z = rng.random_range(-0.5..0.5) * height;
                Vec3::new(radius * u.cos(), radius * u.sin(), z)
            } else {
                let sign = if pick < side + cap { 1.0 } else { -1.0 };
                let r = radius * rng.random_range(0.0f64..1.0).sqrt();
                let u = rng.random_range(0.0..std::f64::consts::TAU);
                Vec3::new(r * u.cos(), r * u.sin(), sign * height / 2.0)
            }
        }
        ShapeParams::Cone { radius, height } => {
            let slant = (radius * radius + height * height).sqrt();
            let lateral = std::f64::consts::PI * radius * slant;
            let base = std::f64::consts::PI * radius * radius;
            let pick = rng.random_range(0.0..lateral + base);
            let u = rng.random_range(0.0..std::f64::consts::TAU);
            if pick < lateral {
                // Distance from apex along the slant, area-uniform.
                let s = rng.random_range(0.0f64..1.0).sqrt();
                let r = s * radius;
                Vec3::new(r * u.cos(), r * u.sin(), height * (1.0 - s))
            } else {
                let r = radius * rng.random_range(0.0f64..1.0).sqrt();
                Vec3::new(r * u.cos(), r * u.sin(), 0.0)
            }
        }
    }
}

/// A normalized `n`-point cloud on the given shape, labeled by class.
/// Deterministic for fixed `(kind, n, seed)`.
pub fn generate_shape(kind: ShapeKind, n: usize, seed: u64) -> PointCloud {
    assert!(n >= 8, "shape sampling needs at least 8 points");
    let mut rng = rng_from_seed(seed);
    let raw = sample_surface(ShapeParams::default_for(kind), n, &mut rng);
    let cloud = normalize(&PointCloud::new(raw)).expect("analytic surfaces are nondegenerate");
    cloud.with_label(kind.label())
}
