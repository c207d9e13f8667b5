//! Local curvature estimation via the "surface variation" of a point's
//! k-neighborhood: the smallest covariance eigenvalue divided by the trace.
//! The value lies in [0, 1/3]; 0 for planar neighborhoods, 1/3 for fully
//! isotropic ones. Rotation invariant.

use super::{GeometryError, NeighborIndex, PointCloud};
use crate::vec3::{Vec3, ZERO};

/// Eigenvalues of a symmetric 3x3 matrix in nondecreasing order, computed by
/// cyclic Jacobi rotations.
pub fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let mut a = m;
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= f64::EPSILON * f64::EPSILON * (diag + 1e-300) {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    r[i][j] = a[i][j];
                }
            }
            for i in 0..3 {
                r[i][p] = c * a[i][p] - s * a[i][q];
                r[i][q] = s * a[i][p] + c * a[i][q];
            }
            let mut next = r;
            for j in 0..3 {
                next[p][j] = c * r[p][j] - s * r[q][j];
                next[q][j] = s * r[p][j] + c * r[q][j];
            }
            a = next;
        }
    }
    let mut eig = [a[0][0], a[1][1], a[2][2]];
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Covariance matrix of a set of points around their mean.
pub(crate) fn covariance(points: &[Vec3]) -> [[f64; 3]; 3] {
    let n = points.len() as f64;
    let mut mean = ZERO;
    for p in points {
        mean += *p;
    }
    mean = mean / n;
    let mut c = [[0.0; 3]; 3];
    for p in points {
        let d = *p - mean;
        let d = [d.x, d.y, d.z];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] += d[i] * d[j];
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    c
}

/// Surface variation of point `i`'s k-neighborhood (the point itself
/// included). Requires `n >= k >= 4`.
pub fn estimate_curvature(
    cloud: &PointCloud,
    index: &NeighborIndex,
    i: usize,
    k: usize,
) -> Result<f64, GeometryError> {
    assert!(k >= 4, "curvature needs a neighborhood of at least 4 points");
    assert!(cloud.len() >= k, "cloud smaller than neighborhood");
    let neighbors: Vec<Vec3> = index
        .knn(cloud.points[i], k)
        .into_iter()
        .map(|(j, _)| cloud.points[j])
        .collect();
    let cov = covariance(&neighbors);
    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    if trace < 1e-18 {
        return Err(GeometryError::DegenerateNeighborhood(1e-18));
    }
    let eig = sym3_eigenvalues(cov);
    Ok((eig[0] / trace).max(0.0))
}
