//! Static 3D KD-tree over points tagged with an ordered key.
//!
//! Nearest-neighbor ties are broken by the smallest key, which makes the
//! result independent of build order.

use glam::DVec3;

#[derive(Debug, Clone)]
pub struct KdTree<K> {
    // Balanced implicit layout: the node of a slice [lo, hi) sits at its midpoint.
    points: Vec<(DVec3, K)>,
}

impl<K: Copy + Ord> KdTree<K> {
    pub fn build(mut points: Vec<(DVec3, K)>) -> Self {
        let len = points.len();
        build_rec(&mut points, 0, len, 0);
        KdTree { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, query: DVec3) -> Option<K> {
        self.nearest_with_distance(query).map(|(k, _)| k)
    }

    /// Nearest key and its squared distance.
    pub fn nearest_with_distance(&self, query: DVec3) -> Option<(K, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best: Option<(f64, K)> = None;
        self.nearest_rec(query, 0, self.points.len(), 0, &mut best);
        best.map(|(d, k)| (k, d))
    }

    fn nearest_rec(
        &self,
        q: DVec3,
        lo: usize,
        hi: usize,
        depth: usize,
        best: &mut Option<(f64, K)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let (p, key) = self.points[mid];
        let d2 = p.distance_squared(q);
        let better = match best {
            None => true,
            Some((bd, bk)) => d2 < *bd || (d2 == *bd && key < *bk),
        };
        if better {
            *best = Some((d2, key));
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.nearest_rec(q, near.0, near.1, depth + 1, best);
        // `<=` keeps equal-distance candidates on the far side reachable for tie-breaking.
        if best.is_none_or(|(bd, _)| diff * diff <= bd) {
            self.nearest_rec(q, far.0, far.1, depth + 1, best);
        }
    }

    /// Keys of all points with `|p - query| <= radius`, sorted.
    pub fn within(&self, query: DVec3, radius: f64) -> Vec<K> {
        let mut out = Vec::new();
        self.within_rec(query, radius, radius * radius, 0, self.points.len(), 0, &mut out);
        out.sort_unstable();
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn within_rec(
        &self,
        q: DVec3,
        r: f64,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        out: &mut Vec<K>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let (p, key) = self.points[mid];
        if p.distance_squared(q) <= r2 {
            out.push(key);
        }
        let axis = depth % 3;
        let diff = q[axis] - p[axis];
        if diff - r <= 0.0 {
            self.within_rec(q, r, r2, lo, mid, depth + 1, out);
        }
        if diff + r >= 0.0 {
            self.within_rec(q, r, r2, mid + 1, hi, depth + 1, out);
        }
    }
}

fn build_rec<K>(points: &mut [(DVec3, K)], lo: usize, hi: usize, depth: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mid = (lo + hi) / 2;
    let axis = depth % 3;
    points[lo..hi].select_nth_unstable_by(mid - lo, |a, b| a.0[axis].total_cmp(&b.0[axis]));
    build_rec(points, lo, mid, depth + 1);
    build_rec(points, mid + 1, hi, depth + 1);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_nearest(points: &[(DVec3, u32)], q: DVec3) -> u32 {
        points
            .iter()
            .min_by(|a, b| {
                a.0.distance_squared(q)
                    .total_cmp(&b.0.distance_squared(q))
                    .then(a.1.cmp(&b.1))
            })
            .unwrap()
            .1
    }

    #[test]
    fn matches_linear_scan_on_lattice_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut points = Vec::new();
        let mut key = 0;
        for x in 0..9 {
            for y in 0..7 {
                for z in 0..3 {
                    if rng.gen_bool(0.6) {
                        points.push((DVec3::new(x as f64, y as f64, z as f64), key));
                        key += 1;
                    }
                }
            }
        }
        let tree = KdTree::build(points.clone());
        for _ in 0..2000 {
            // Half-integer queries hit many exact ties.
            let q = DVec3::new(
                rng.gen_range(-2..20) as f64 * 0.5,
                rng.gen_range(-2..16) as f64 * 0.5,
                rng.gen_range(-2..8) as f64 * 0.5,
            );
            assert_eq!(tree.nearest(q), Some(linear_nearest(&points, q)), "{q:?}");
        }
    }

    #[test]
    fn within_matches_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let points: Vec<_> = (0..500)
            .map(|i| {
                (
                    DVec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0,
                    i as u32,
                )
            })
            .collect();
        let tree = KdTree::build(points.clone());
        for _ in 0..100 {
            let q = DVec3::new(rng.gen(), rng.gen(), rng.gen()) * 10.0;
            let r = rng.gen_range(0.0..3.0);
            let mut expected: Vec<u32> = points
                .iter()
                .filter(|p| p.0.distance_squared(q) <= r * r)
                .map(|p| p.1)
                .collect();
            expected.sort();
            assert_eq!(tree.within(q, r), expected);
        }
    }

    #[test]
    fn empty_tree() {
        let tree: KdTree<u32> = KdTree::build(Vec::new());
        assert!(tree.nearest(DVec3::ZERO).is_none());
        assert!(tree.within(DVec3::ZERO, 1.0).is_empty());
    }
}
