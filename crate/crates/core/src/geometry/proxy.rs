//! Dense point-sample stand-in for a continuous surface, used to evaluate
//! point-to-surface distances.

use super::{NeighborIndex, Normalization, PointCloud, ShapeParams};
use crate::rng::rng_from_seed;
use crate::vec3::Vec3;

/// Default number of analytic samples backing a synthetic-shape proxy.
pub const DEFAULT_PROXY_SAMPLES: usize = 20_000;

/// A dense sample of the underlying surface with a nearest-neighbor index.
pub struct SurfaceProxy {
    index: NeighborIndex,
}

impl SurfaceProxy {
    /// Proxy over an explicit sample set.
    pub fn from_points(samples: &[Vec3]) -> Self {
        Self {
            index: NeighborIndex::build(samples),
        }
    }

    /// When no denser sample exists, the clean cloud itself is the proxy.
    /// Distance resolution is then limited by the cloud's sampling density.
    pub fn from_cloud(cloud: &PointCloud) -> Self {
        Self::from_points(&cloud.points)
    }

    /// Dense analytic sample of a synthetic shape, mapped through the same
    /// normalization transform as the cloud it accompanies.
    pub fn from_shape(params: ShapeParams, transform: Normalization, m: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let samples: Vec<Vec3> = super::sample_surface(params, m, &mut rng)
            .into_iter()
            .map(|p| transform.apply(p))
            .collect();
        Self::from_points(&samples)
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Euclidean distance from `q` to the nearest proxy sample.
    pub fn distance(&self, q: Vec3) -> f64 {
        self.index.nearest(q).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeKind;

    #[test]
    fn sphere_proxy_distance_matches_analytic() {
        let mut rng = rng_from_seed(1);
        let samples = super::super::sample_surface(ShapeParams::Sphere, 20_000, &mut rng);
        let proxy = SurfaceProxy::from_points(&samples);
        let d = proxy.distance(Vec3::new(1.5, 0.0, 0.0));
        assert!((d - 0.5).abs() < 2e-2, "sphere distance {d}");
    }

    #[test]
    fn distance_zero_on_a_sample() {
        let samples = vec![Vec3::new(0.2, 0.3, -0.1), Vec3::new(1.0, 1.0, 1.0)];
        let proxy = SurfaceProxy::from_points(&samples);
        assert_eq!(proxy.distance(samples[1]), 0.0);
    }

    #[test]
    fn singleton_proxy_three_four_five() {
        let proxy = SurfaceProxy::from_points(&[Vec3::new(0.0, 0.0, 0.0)]);
        assert_eq!(proxy.distance(Vec3::new(0.0, 3.0, 4.0)), 5.0);
    }

    #[test]
    fn shape_proxy_shares_the_cloud_frame() {
        // A normalized torus cloud and its proxy must agree near the surface.
        let cloud_seed = 33;
        let mut rng = rng_from_seed(cloud_seed);
        let params = ShapeParams::default_for(ShapeKind::Torus);
        let raw = super::super::sample_surface(params, 1024, &mut rng);
        let (cloud, transform) =
            super::super::normalize_with_transform(&PointCloud::new(raw)).unwrap();
        let proxy = SurfaceProxy::from_shape(params, transform, 20_000, 1234);
        for p in cloud.points.iter().step_by(97) {
            assert!(proxy.distance(*p) < 0.03, "cloud point far from proxy");
        }
    }
}
