//! Property-based invariants over the geometry, field and metric layers.

use proptest::prelude::*;

use p2s_core::field::P2sField;
use p2s_core::geometry::{normalize, NeighborIndex, PointCloud, SurfaceProxy};
use p2s_core::metrics::{chamfer, hausdorff, l2_norm};
use p2s_core::reference;
use p2s_core::vec3::Vec3;

fn vec3_strategy(range: f64) -> impl Strategy<Value = Vec3> {
    (
        -range..range,
        -range..range,
        -range..range,
    )
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud_strategy(min_n: usize, max_n: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(vec3_strategy(2.0), min_n..max_n).prop_map(PointCloud::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_brute_force(cloud in cloud_strategy(2, 120), q in vec3_strategy(3.0), k in 1usize..12) {
        let index = NeighborIndex::build(&cloud.points);
        let got = index.knn(q, k);
        let want = reference::knn_brute(&cloud.points, q, k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(g.0, w.0);
            prop_assert_eq!(g.1, w.1);
        }
    }

    #[test]
    fn normalize_is_idempotent(cloud in cloud_strategy(2, 60)) {
        prop_assume!(normalize(&cloud).is_ok());
        let once = normalize(&cloud).unwrap();
        let twice = normalize(&once).unwrap();
        for (a, b) in once.points.iter().zip(&twice.points) {
            prop_assert!((*a - *b).norm() < 1e-12);
        }
    }

    #[test]
    fn proxy_distance_satisfies_triangle_inequality(
        cloud in cloud_strategy(1, 60),
        q1 in vec3_strategy(3.0),
        q2 in vec3_strategy(3.0),
    ) {
        let proxy = SurfaceProxy::from_cloud(&cloud);
        let d1 = proxy.distance(q1);
        let d2 = proxy.distance(q2);
        prop_assert!((d1 - d2).abs() <= q1.dist(q2) + 1e-12);
    }

    #[test]
    fn chamfer_hausdorff_symmetric_and_match_brute(
        a in cloud_strategy(1, 48),
        b in cloud_strategy(1, 48),
    ) {
        let cd = chamfer(&a, &b);
        prop_assert!((cd - chamfer(&b, &a)).abs() < 1e-12);
        prop_assert!((cd - reference::chamfer_brute(&a, &b)).abs() < 1e-12);
        let hd = hausdorff(&a, &b);
        prop_assert!((hd - hausdorff(&b, &a)).abs() < 1e-12);
        prop_assert!((hd - reference::hausdorff_brute(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn set_metrics_are_permutation_invariant(a in cloud_strategy(2, 40), b in cloud_strategy(2, 40), rot in 0usize..17) {
        let mut b_perm = b.clone();
        b_perm.points.rotate_left(rot % b.len().max(1));
        prop_assert!((chamfer(&a, &b) - chamfer(&a, &b_perm)).abs() < 1e-12);
        prop_assert!((hausdorff(&a, &b) - hausdorff(&a, &b_perm)).abs() < 1e-12);
    }

    #[test]
    fn l2_matches_elementwise_oracle(a in cloud_strategy(2, 40), shift in vec3_strategy(0.5)) {
        let mut b = a.clone();
        for p in b.points.iter_mut() {
            *p += shift;
        }
        let got = l2_norm(&a, &b).unwrap();
        prop_assert!((got - reference::l2_brute(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn kde_field_is_finite_everywhere(cloud in cloud_strategy(1, 30), q in vec3_strategy(900.0)) {
        let field = P2sField::kde(&cloud, 0.3);
        let f = field.evaluate(q);
        prop_assert!(f.is_finite());
        prop_assert!(field.kde_log_density(q).is_finite());
    }
}
