//! Point-cloud container, normalization, spatial indexing, surface distance,
//! curvature estimation and synthetic shape generation.

mod curvature;
mod kdtree;
mod proxy;
mod shapes;

pub use curvature::{estimate_curvature, sym3_eigenvalues};
pub use kdtree::NeighborIndex;
pub use proxy::{SurfaceProxy, DEFAULT_PROXY_SAMPLES};
pub use shapes::{generate_shape, sample_surface, surface_normal, ShapeKind, ShapeParams};

use thiserror::Error;

use crate::vec3::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// All points coincide; the cloud has no scale to normalize by.
    #[error("degenerate cloud: all points coincide")]
    DegenerateCloud,
    /// Neighborhood covariance has (numerically) zero trace.
    #[error("degenerate neighborhood: covariance trace below {0:e}")]
    DegenerateNeighborhood(f64),
    /// A cloud with zero points was supplied where at least one is required.
    #[error("empty point cloud")]
    EmptyCloud,
}

/// An ordered set of 3D points with an optional class label and id.
///
/// Point order is meaningful: perturbation attacks keep per-index
/// correspondence between clean and adversarial clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub label: Option<usize>,
    pub id: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            label: None,
            id: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Vec3 {
        let mut c = crate::vec3::ZERO;
        for p in &self.points {
            c += *p;
        }
        c / self.points.len() as f64
    }

    pub fn max_norm(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// The affine transform applied by [`normalize`]: `q -> (q - centroid) / scale`.
///
/// Kept so that auxiliary geometry (dense surface proxies, analytic normals)
/// can be mapped into the same frame as a normalized cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub centroid: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, q: Vec3) -> Vec3 {
        (q - self.centroid) / self.scale
    }
}

/// Center a cloud at the origin and scale it so the farthest point has unit
/// norm. Point order is preserved.
pub fn normalize(cloud: &PointCloud) -> Result<PointCloud, GeometryError> {
    Ok(normalize_with_transform(cloud)?.0)
}

/// As [`normalize`], additionally returning the transform that was applied.
pub fn normalize_with_transform(
    cloud: &PointCloud,
) -> Result<(PointCloud, Normalization), GeometryError> {
    if cloud.is_empty() {
        return Err(GeometryError::EmptyCloud);
    }
    let centroid = cloud.centroid();
    let scale = cloud
        .points
        .iter()
        .map(|p| (*p - centroid).norm())
        .fold(0.0, f64::max);
    if scale < 1e-12 {
        return Err(GeometryError::DegenerateCloud);
    }
    let transform = Normalization { centroid, scale };
    let points = cloud.points.iter().map(|p| transform.apply(*p)).collect();
    Ok((
        PointCloud {
            points,
            label: cloud.label,
            id: cloud.id.clone(),
        },
        transform,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_symmetric_pair() {
        let cloud = PointCloud::new(vec![Vec3::new(2.0, 0.0, 0.0), Vec3::new(-2.0, 0.0, 0.0)]);
        let out = normalize(&cloud).unwrap();
        assert_eq!(out.points[0], Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(out.points[1], Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn normalize_rejects_coincident_points() {
        let p = Vec3::new(0.3, -0.4, 2.0);
        let cloud = PointCloud::new(vec![p; 5]);
        assert_eq!(normalize(&cloud), Err(GeometryError::DegenerateCloud));
    }

    #[test]
    fn normalize_random_cloud_centers_and_scales() {
        let mut rng = crate::rng::rng_from_seed(11);
        let points = (0..100)
            .map(|_| {
                Vec3::new(
                    crate::rng::normal01(&mut rng) * 3.0 + 1.0,
                    crate::rng::normal01(&mut rng) * 0.5 - 4.0,
                    crate::rng::normal01(&mut rng) * 2.0,
                )
            })
            .collect();
        let out = normalize(&PointCloud::new(points)).unwrap();
        // Oracle: recompute centroid and max norm from the output.
        assert!(out.centroid().norm() < 1e-9);
        let max_norm = out.max_norm();
        assert!((max_norm - 1.0).abs() < 1e-9, "max norm {max_norm}");
    }

    #[test]
    fn normalize_preserves_order_label_id() {
        let cloud = PointCloud::new(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, 0.0, -3.0)])
            .with_label(2)
            .with_id("c0");
        let out = normalize(&cloud).unwrap();
        assert_eq!(out.label, Some(2));
        assert_eq!(out.id.as_deref(), Some("c0"));
        assert!(out.points[0].z > out.points[1].z);
    }
}
