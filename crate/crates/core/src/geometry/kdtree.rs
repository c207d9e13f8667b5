//! Exact k-nearest-neighbor queries over an immutable point set.
//!
//! A balanced kd-tree over point indices. Results are identical to a
//! brute-force scan: exact Euclidean metric, sorted by nondecreasing
//! distance, ties broken by the lower point index.

use crate::vec3::Vec3;

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Spatial index over a fixed point set. Queries are pure and thread-safe.
pub struct NeighborIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
    root: Node,
}

impl NeighborIndex {
    pub fn build(points: &[Vec3]) -> Self {
        assert!(!points.is_empty(), "cannot index an empty point set");
        let points = points.to_vec();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let root = build_node(&points, &mut order, 0, points.len());
        Self {
            points,
            order,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vec3 {
        self.points[i]
    }

    /// The `min(k, n)` nearest points to `q` as `(index, distance)` pairs,
    /// sorted by nondecreasing distance, ties by lower index.
    pub fn knn(&self, q: Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BoundedHeap::new(k);
        self.search(&self.root, q, &mut heap);
        let mut out = heap.entries;
        out.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
        out.into_iter()
            .map(|(i, d2)| (i, d2.sqrt()))
            .collect()
    }

    /// Index and distance of the single nearest point.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        self.knn(q, 1)[0]
    }

    fn search(&self, node: &Node, q: Vec3, heap: &mut BoundedHeap) {
        match node {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    let idx = idx as usize;
                    heap.offer(idx, q.dist2(self.points[idx]));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let delta = q.component(*axis) - value;
                let (near, far) = if delta <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, heap);
                // The far side can still hold a closer point (or an equal
                // distance with a lower index), so prune with <=.
                if !heap.full() || delta * delta <= heap.worst_dist2() {
                    self.search(far, q, heap);
                }
            }
        }
    }
}

fn build_node(points: &[Vec3], order: &mut [u32], start: usize, end: usize) -> Node {
    debug_assert!(end > start);
    if end - start <= LEAF_SIZE {
        return Node::Leaf { start, end };
    }
    // Split on the axis with the widest extent.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order[..end - start].iter() {
        let p = points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p.component(a));
            hi[a] = hi[a].max(p.component(a));
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
        .unwrap();
    if hi[axis] - lo[axis] <= 0.0 {
        // All points coincide; no useful split.
        return Node::Leaf { start, end };
    }
    let mid = (end - start) / 2;
    order[..end - start].select_nth_unstable_by(mid, |&a, &b| {
        let pa = points[a as usize].component(axis);
        let pb = points[b as usize].component(axis);
        (pa, a).partial_cmp(&(pb, b)).unwrap()
    });
    let value = points[order[mid] as usize].component(axis);
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = Box::new(build_node(points, left_slice, start, start + mid));
    let right = Box::new(build_node(points, right_slice, start + mid, end));
    Node::Split {
        axis,
        value,
        left,
        right,
    }
}

/// Fixed-capacity worst-first collection of (index, squared distance).
struct BoundedHeap {
    k: usize,
    entries: Vec<(usize, f64)>,
}

impl BoundedHeap {
    fn new(k: usize) -> Self {
        Self {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn full(&self) -> bool {
        self.entries.len() >= self.k
    }

    fn worst_dist2(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.1)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn offer(&mut self, idx: usize, d2: f64) {
        if self.entries.len() < self.k {
            self.entries.push((idx, d2));
            return;
        }
        // Evict the lexicographically worst (distance, index) entry if the
        // candidate beats it; higher index loses ties.
        let mut worst = 0;
        for i in 1..self.entries.len() {
            let (wi, wd) = self.entries[worst];
            let (ei, ed) = self.entries[i];
            if (ed, ei) > (wd, wi) {
                worst = i;
            }
        }
        let (wi, wd) = self.entries[worst];
        if (d2, idx) < (wd, wi) {
            self.entries[worst] = (idx, d2);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal01, rng_from_seed};

    /// Brute-force oracle with the same metric and tie-break.
    pub fn knn_brute(points: &[Vec3], q: Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points.iter().map(|p| q.dist2(*p)).enumerate().collect();
        all.sort_by(|a, b| (a.1, a.0).partial_cmp(&(b.1, b.0)).unwrap());
        all.truncate(k.min(points.len()));
        all.into_iter().map(|(i, d2)| (i, d2.sqrt())).collect()
    }

    #[test]
    fn unit_square_corner_query() {
        let pts = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let index = NeighborIndex::build(&pts);
        let hits = index.knn(Vec3::new(0.0, 0.0, 0.0), 1);
        assert_eq!(hits[0].0, 0);
        assert_eq!(hits[0].1, 0.0);
    }

    #[test]
    fn equidistant_tie_breaks_to_lower_index() {
        // Points 3 and 7 both sit at distance 1 from the query.
        let mut pts = vec![Vec3::new(10.0, 10.0, 10.0); 8];
        pts[3] = Vec3::new(1.0, 0.0, 0.0);
        pts[7] = Vec3::new(-1.0, 0.0, 0.0);
        let index = NeighborIndex::build(&pts);
        let hits = index.knn(Vec3::new(0.0, 0.0, 0.0), 1);
        assert_eq!(hits[0].0, 3);
    }

    #[test]
    fn k_clipped_to_n() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
        let index = NeighborIndex::build(&pts);
        assert_eq!(index.knn(Vec3::new(0.0, 0.0, 0.0), 10).len(), 2);
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = rng_from_seed(42);
        for cloud_i in 0..20 {
            let n = 20 + (cloud_i * 17) % 180;
            let pts: Vec<Vec3> = (0..n)
                .map(|_| Vec3::new(normal01(&mut rng), normal01(&mut rng), normal01(&mut rng)))
                .collect();
            let index = NeighborIndex::build(&pts);
            for _ in 0..10 {
                let q = Vec3::new(normal01(&mut rng), normal01(&mut rng), normal01(&mut rng));
                let k = 1 + (cloud_i % 7);
                let got = index.knn(q, k);
                let want = knn_brute(&pts, q, k);
                assert_eq!(
                    got.iter().map(|e| e.0).collect::<Vec<_>>(),
                    want.iter().map(|e| e.0).collect::<Vec<_>>()
                );
                for (g, w) in got.iter().zip(&want) {
                    assert_eq!(g.1, w.1);
                }
            }
        }
    }

    #[test]
    fn duplicate_points_are_handled() {
        let mut pts = vec![Vec3::new(0.5, 0.5, 0.5); 40];
        pts.push(Vec3::new(0.0, 0.0, 0.0));
        let index = NeighborIndex::build(&pts);
        let hits = index.knn(Vec3::new(0.1, 0.1, 0.1), 3);
        assert_eq!(hits[0].0, 40);
        assert_eq!(hits[1].0, 0);
        assert_eq!(hits[2].0, 1);
    }
}
