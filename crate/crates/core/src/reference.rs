//! Brute-force reference implementations.
//!
//! Deliberately naive counterparts of the optimized paths (kd-tree queries,
//! Jacobi eigenvalues, augmenting-path and auction assignment). They share
//! no code with what they check and exist so tests and the acceptance suite
//! can cross-validate results on small instances. Nothing in the production
//! pipeline calls into this module.

use crate::geometry::PointCloud;
use crate::vec3::Vec3;

/// Exhaustive k-nearest-neighbors: full scan, sort by (distance, index).
pub fn knn_brute(points: &[Vec3], q: Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = points.iter().map(|p| q.dist2(*p)).enumerate().collect();
    all.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
    all.truncate(k.min(points.len()));
    all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
}

fn nearest_dist2(points: &[Vec3], q: Vec3) -> f64 {
    points
        .iter()
        .map(|p| q.dist2(*p))
        .fold(f64::INFINITY, f64::min)
}

/// O(n*m) Chamfer distance, squared convention.
pub fn chamfer_brute(a: &PointCloud, b: &PointCloud) -> f64 {
    let ab: f64 = a
        .points
        .iter()
        .map(|p| nearest_dist2(&b.points, *p))
        .sum::<f64>()
        / a.len() as f64;
    let ba: f64 = b
        .points
        .iter()
        .map(|p| nearest_dist2(&a.points, *p))
        .sum::<f64>()
        / b.len() as f64;
    0.5 * (ab + ba)
}

/// O(n*m) Hausdorff distance, unsquared.
pub fn hausdorff_brute(a: &PointCloud, b: &PointCloud) -> f64 {
    let ab = a
        .points
        .iter()
        .map(|p| nearest_dist2(&b.points, *p))
        .fold(0.0, f64::max);
    let ba = b
        .points
        .iter()
        .map(|p| nearest_dist2(&a.points, *p))
        .fold(0.0, f64::max);
    ab.max(ba).sqrt()
}

/// Element-wise displacement Frobenius norm.
pub fn l2_brute(a: &PointCloud, b: &PointCloud) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (p, q) in a.points.iter().zip(&b.points) {
        let d = *p - *q;
        acc += d.x * d.x + d.y * d.y + d.z * d.z;
    }
    acc.sqrt()
}

/// Symmetric 3x3 eigenvalues by the trigonometric solution of the
/// characteristic cubic (independent of the Jacobi path).
pub fn sym3_eigenvalues_trig(m: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det_b = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det_b / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e0 = q + 2.0 * p * phi.cos();
    let e2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    let e1 = 3.0 * q - e0 - e2;
    let mut e = [e0, e1, e2];
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

/// Brute curvature: full-scan neighborhood, covariance, trigonometric
/// eigenvalues.
pub fn curvature_brute(cloud: &PointCloud, i: usize, k: usize) -> f64 {
    let neighbors: Vec<Vec3> = knn_brute(&cloud.points, cloud.points[i], k)
        .into_iter()
        .map(|(j, _)| cloud.points[j])
        .collect();
    let n = neighbors.len() as f64;
    let mut mean = crate::vec3::ZERO;
    for p in &neighbors {
        mean += *p;
    }
    mean = mean / n;
    let mut c = [[0.0; 3]; 3];
    for p in &neighbors {
        let d = [p.x - mean.x, p.y - mean.y, p.z - mean.z];
        for r in 0..3 {
            for s in 0..3 {
                c[r][s] += d[r] * d[s];
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    let trace = c[0][0] + c[1][1] + c[2][2];
    if trace < 1e-18 {
        return 0.0;
    }
    let e = sym3_eigenvalues_trig(c);
    (e[0] / trace).max(0.0)
}

/// Brute curvature-change metric (mirrors `metrics::curv_metric`).
pub fn curv_metric_brute(clean: &PointCloud, adv: &PointCloud, k: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..adv.len() {
        let c_adv = curvature_brute(adv, i, k);
        let nearest = knn_brute(&clean.points, adv.points[i], 1)[0].0;
        acc += (c_adv - curvature_brute(clean, nearest, k)).abs();
    }
    acc / adv.len() as f64
}

/// Brute regularity metric (mirrors `metrics::gr_metric`).
pub fn gr_metric_brute(cloud: &PointCloud, k: usize) -> f64 {
    let mut acc = 0.0;
    for p in &cloud.points {
        let hits = knn_brute(&cloud.points, *p, k + 1);
        let dists: Vec<f64> = hits.iter().skip(1).map(|(_, d)| *d).collect();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        if mean <= 0.0 {
            continue;
        }
        let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / dists.len() as f64;
        acc += var.sqrt() / mean;
    }
    acc / cloud.len() as f64
}

/// Classic Munkres (Kuhn-Munkres star/prime) minimum-cost assignment.
/// O(n^4); zero detection uses a small epsilon scaled to the costs.
/// Returns the optimal total cost.
pub fn munkres_assignment(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    assert!(n > 0 && cost.iter().all(|row| row.len() == n));
    let scale = cost
        .iter()
        .flat_map(|r| r.iter())
        .cloned()
        .fold(0.0f64, f64::max);
    let eps = if scale > 0.0 { scale * 1e-12 } else { 1e-300 };
    let mut m: Vec<Vec<f64>> = cost.to_vec();

    // Step 1: subtract row minima.
    for row in &mut m {
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        for v in row.iter_mut() {
            *v -= min;
        }
    }

    const NONE: usize = usize::MAX;
    let mut starred_in_row = vec![NONE; n]; // column of star in row
    let mut starred_in_col = vec![NONE; n]; // row of star in column
    let mut primed_in_row = vec![NONE; n];
    let mut row_covered = vec![false; n];
    let mut col_covered = vec![false; n];

    // Step 2: greedy initial stars.
    for r in 0..n {
        for c in 0..n {
            if m[r][c] <= eps && starred_in_row[r] == NONE && starred_in_col[c] == NONE {
                starred_in_row[r] = c;
                starred_in_col[c] = r;
            }
        }
    }

    loop {
        // Step 3: cover starred columns.
        for c in 0..n {
            col_covered[c] = starred_in_col[c] != NONE;
        }
        if col_covered.iter().filter(|x| **x).count() == n {
            break;
        }

        'augment: loop {
            // Step 4: find an uncovered zero and prime it.
            let mut found: Option<(usize, usize)> = None;
            'scan: for r in 0..n {
                if row_covered[r] {
                    continue;
                }
                for c in 0..n {
                    if !col_covered[c] && m[r][c] <= eps {
                        found = Some((r, c));
                        break 'scan;
                    }
                }
            }
            match found {
                Some((r, c)) => {
                    primed_in_row[r] = c;
                    if starred_in_row[r] == NONE {
                        // Step 5: augmenting path of alternating stars and
                        // primes starting at this prime.
                        let mut path = vec![(r, c)];
                        loop {
                            let col = path.last().unwrap().1;
                            let star_row = starred_in_col[col];
                            if star_row == NONE {
                                break;
                            }
                            path.push((star_row, col));
                            let prime_col = primed_in_row[star_row];
                            path.push((star_row, prime_col));
                        }
                        for (idx, (pr, pc)) in path.iter().enumerate() {
                            if idx % 2 == 0 {
                                starred_in_row[*pr] = *pc;
                                starred_in_col[*pc] = *pr;
                            }
                        }
                        primed_in_row.fill(NONE);
                        row_covered.fill(false);
                        col_covered.fill(false);
                        break 'augment;
                    } else {
                        row_covered[r] = true;
                        col_covered[starred_in_row[r]] = false;
                    }
                }
                None => {
                    // Step 6: adjust by the minimum uncovered value.
                    let mut min = f64::INFINITY;
                    for r in 0..n {
                        if row_covered[r] {
                            continue;
                        }
                        for c in 0..n {
                            if !col_covered[c] {
                                min = min.min(m[r][c]);
                            }
                        }
                    }
                    for r in 0..n {
                        for c in 0..n {
                            if row_covered[r] && col_covered[c] {
                                m[r][c] += min;
                            } else if !row_covered[r] && !col_covered[c] {
                                m[r][c] -= min;
                            }
                        }
                    }
                }
            }
        }
    }

    (0..n).map(|r| cost[r][starred_in_row[r]]).sum()
}

/// Optimal mean matched distance via the Munkres oracle.
pub fn emd_brute(a: &PointCloud, b: &PointCloud) -> f64 {
    assert_eq!(a.len(), b.len());
    let cost: Vec<Vec<f64>> = a
        .points
        .iter()
        .map(|p| b.points.iter().map(|q| p.dist(*q)).collect())
        .collect();
    munkres_assignment(&cost) / a.len() as f64
}

/// Exhaustive optimal assignment for tiny instances (n <= 9), used to
/// validate the Munkres oracle itself.
pub fn emd_exhaustive(a: &PointCloud, b: &PointCloud) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n <= 9, "factorial search only for tiny instances");
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &j)| a.points[i].dist(b.points[j]))
            .sum();
        if total < best {
            best = total;
        }
    });
    best / n as f64
}

fn permute(perm: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == perm.len() {
        visit(perm);
        return;
    }
    for i in k..perm.len() {
        perm.swap(k, i);
        permute(perm, k + 1, visit);
        perm.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal01, rng_from_seed};

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = rng_from_seed(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Vec3::new(normal01(&mut rng), normal01(&mut rng), normal01(&mut rng)))
                .collect(),
        )
    }

    #[test]
    fn munkres_matches_exhaustive_search() {
        for seed in 0..10 {
            let n = 3 + (seed as usize % 6);
            let a = random_cloud(n, seed);
            let b = random_cloud(n, 1000 + seed);
            let want = emd_exhaustive(&a, &b);
            let got = emd_brute(&a, &b);
            assert!(
                (got - want).abs() < 1e-9,
                "n={n} seed={seed}: munkres {got} vs exhaustive {want}"
            );
        }
    }

    #[test]
    fn munkres_identity_is_zero() {
        let a = random_cloud(12, 3);
        assert!(emd_brute(&a, &a).abs() < 1e-12);
    }
}
