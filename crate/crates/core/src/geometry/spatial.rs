//! Kd-tree over an immutable point set for nearest-neighbor and radius
//! queries. Distances are computed with the same expression as a linear
//! scan would use, so query results match a brute-force oracle exactly
//! (closed-ball semantics: a point at exactly the query radius is inside).

use super::{GeometryError, Point3};

struct Node {
    /// Index into the owning `SpatialIndex::points`.
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

const NO_CHILD: i32 = -1;

/// Immutable nearest-neighbor / radius-query structure over a point set.
pub struct SpatialIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

impl SpatialIndex {
    pub fn new(points: Vec<Point3>) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build(&points, &mut order[..], &mut nodes);
        Self {
            points,
            nodes,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// Euclidean distance from `q` to the closest indexed point.
    pub fn nearest_distance(&self, q: &Point3) -> Result<f64, GeometryError> {
        self.nearest(q).map(|(_, d)| d)
    }

    /// Index and distance of the closest point to `q`. Ties are broken by
    /// the lowest point index.
    pub fn nearest(&self, q: &Point3) -> Result<(usize, f64), GeometryError> {
        if self.points.is_empty() {
            return Err(GeometryError::EmptyIndex);
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.nearest_rec(self.root, q, &mut best);
        Ok((best.0 as usize, best.1.sqrt()))
    }

    fn nearest_rec(&self, node: i32, q: &Point3, best: &mut (u32, f64)) {
        if node == NO_CHILD {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        let d = q.distance_sq(p);
        if d < best.1 || (d == best.1 && n.point < best.0) {
            *best = (n.point, d);
        }
        let delta = q.coord(n.axis as usize) - p.coord(n.axis as usize);
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_rec(near, q, best);
        if delta * delta <= best.1 {
            self.nearest_rec(far, q, best);
        }
    }

    /// Indices of all points within the closed ball of radius `r` around
    /// `q`, in ascending index order.
    pub fn radius_query(&self, q: &Point3, r: f64) -> Result<Vec<usize>, GeometryError> {
        if !(r > 0.0) {
            return Err(GeometryError::NonPositiveRadius(r));
        }
        let mut out = Vec::new();
        self.radius_rec(self.root, q, r * r, &mut out);
        out.sort_unstable();
        Ok(out)
    }

    fn radius_rec(&self, node: i32, q: &Point3, r_sq: f64, out: &mut Vec<usize>) {
        if node == NO_CHILD {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        if q.distance_sq(p) <= r_sq {
            out.push(n.point as usize);
        }
        let delta = q.coord(n.axis as usize) - p.coord(n.axis as usize);
        // Left subtree holds coordinates <= the split; prune it only when
        // even the split plane is strictly outside the ball.
        if !(delta > 0.0 && delta * delta > r_sq) {
            self.radius_rec(n.left, q, r_sq, out);
        }
        if !(delta < 0.0 && delta * delta > r_sq) {
            self.radius_rec(n.right, q, r_sq, out);
        }
    }

    /// Median of each point's distance to its closest other point. Used to
    /// suggest a pivot-ball radius from sampling density.
    pub fn median_neighbor_spacing(&self) -> Option<f64> {
        if self.points.len() < 2 {
            return None;
        }
        let mut spacings: Vec<f64> = Vec::with_capacity(self.points.len());
        for (i, p) in self.points.iter().enumerate() {
            let mut best = f64::INFINITY;
            self.nearest_excluding(self.root, p, i as u32, &mut best);
            spacings.push(best.sqrt());
        }
        spacings.sort_by(|a, b| a.total_cmp(b));
        Some(spacings[spacings.len() / 2])
    }

    fn nearest_excluding(&self, node: i32, q: &Point3, exclude: u32, best: &mut f64) {
        if node == NO_CHILD {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        if n.point != exclude {
            let d = q.distance_sq(p);
            if d < *best {
                *best = d;
            }
        }
        let delta = q.coord(n.axis as usize) - p.coord(n.axis as usize);
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.nearest_excluding(near, q, exclude, best);
        if delta * delta <= *best {
            self.nearest_excluding(far, q, exclude, best);
        }
    }
}

fn build(points: &[Point3], order: &mut [u32], nodes: &mut Vec<Node>) -> i32 {
    if order.is_empty() {
        return NO_CHILD;
    }
    // Split on the axis with the widest extent; degenerate extents fall
    // back to x.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p.coord(a));
            hi[a] = hi[a].max(p.coord(a));
        }
    }
    let mut axis = 0;
    let mut widest = hi[0] - lo[0];
    for a in 1..3 {
        if hi[a] - lo[a] > widest {
            widest = hi[a] - lo[a];
            axis = a;
        }
    }
    order.sort_unstable_by(|&a, &b| {
        points[a as usize]
            .coord(axis)
            .total_cmp(&points[b as usize].coord(axis))
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let point = order[mid];
    let (left_slice, rest) = order.split_at_mut(mid);
    let right_slice = &mut rest[1..];
    let left = build(points, left_slice, nodes);
    let right = build(points, right_slice, nodes);
    nodes.push(Node {
        point,
        axis: axis as u8,
        left,
        right,
    });
    (nodes.len() - 1) as i32
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[Point3], q: &Point3) -> f64 {
        points
            .iter()
            .map(|p| q.distance_sq(p))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    fn brute_radius(points: &[Point3], q: &Point3, r: f64) -> Vec<usize> {
        points
            .iter()
            .enumerate()
            .filter(|(_, p)| q.distance_sq(p) <= r * r)
            .map(|(i, _)| i)
            .collect()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                )
            })
            .collect()
    }

    #[test]
    fn nearest_345_triangle() {
        let idx = SpatialIndex::new(vec![Point3::new(3.0, 4.0, 0.0)]);
        let d = idx.nearest_distance(&Point3::ORIGIN).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn nearest_of_member_is_zero() {
        let pts = vec![Point3::new(1.0, 1.0, 1.0), Point3::new(2.0, 0.0, 0.0)];
        let idx = SpatialIndex::new(pts);
        assert_eq!(idx.nearest_distance(&Point3::new(2.0, 0.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn empty_index_is_an_error() {
        let idx = SpatialIndex::new(Vec::new());
        assert!(matches!(
            idx.nearest_distance(&Point3::ORIGIN),
            Err(GeometryError::EmptyIndex)
        ));
    }

    #[test]
    fn radius_includes_boundary() {
        let pts = vec![
            Point3::new(4.9, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(5.1, 0.0, 0.0),
        ];
        let idx = SpatialIndex::new(pts);
        let hits = idx.radius_query(&Point3::ORIGIN, 5.0).unwrap();
        assert_eq!(hits, vec![0, 1]);
    }

    #[test]
    fn radius_smaller_than_everything_is_empty() {
        let pts = vec![Point3::new(10.0, 0.0, 0.0), Point3::new(0.0, 12.0, 0.0)];
        let idx = SpatialIndex::new(pts);
        assert!(idx.radius_query(&Point3::ORIGIN, 1.0).unwrap().is_empty());
    }

    #[test]
    fn non_positive_radius_rejected() {
        let idx = SpatialIndex::new(vec![Point3::ORIGIN]);
        assert!(idx.radius_query(&Point3::ORIGIN, 0.0).is_err());
        assert!(idx.radius_query(&Point3::ORIGIN, -1.0).is_err());
    }

    #[test]
    fn nearest_matches_linear_scan_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..=500);
            let pts = random_points(&mut rng, n);
            let idx = SpatialIndex::new(pts.clone());
            for _ in 0..5 {
                let q = Point3::new(
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(-60.0..60.0),
                );
                assert_eq!(idx.nearest_distance(&q).unwrap(), brute_nearest(&pts, &q));
            }
        }
    }

    #[test]
    fn radius_matches_linear_scan_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let n = rng.gen_range(1..=500);
            let pts = random_points(&mut rng, n);
            let idx = SpatialIndex::new(pts.clone());
            for _ in 0..3 {
                let q = Point3::new(
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(-60.0..60.0),
                    rng.gen_range(-60.0..60.0),
                );
                let r = rng.gen_range(0.5..40.0);
                assert_eq!(idx.radius_query(&q, r).unwrap(), brute_radius(&pts, &q, r));
            }
        }
    }

    #[test]
    fn radius_query_200_points_r7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 200);
        let idx = SpatialIndex::new(pts.clone());
        let q = Point3::new(1.0, -2.0, 3.0);
        assert_eq!(
            idx.radius_query(&q, 7.0).unwrap(),
            brute_radius(&pts, &q, 7.0)
        );
    }

    #[test]
    fn duplicate_points_all_reported() {
        let pts = vec![Point3::ORIGIN, Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)];
        let idx = SpatialIndex::new(pts);
        assert_eq!(idx.radius_query(&Point3::ORIGIN, 0.5).unwrap(), vec![0, 1]);
    }
}
