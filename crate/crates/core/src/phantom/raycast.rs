//! First-hit ray casting over labeled triangle surfaces, accelerated by a
//! bounding-volume hierarchy. Used by both renderers and by the
//! visibility-soundness oracle in tests (which brute-forces all triangles).

use crate::cloud::TissueClass;
use crate::geometry::{Point3, TriangleMesh, Vec3};

/// Minimum ray parameter accepted as a hit, to reject self-intersections
/// at the origin.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Point3,
    pub class: TissueClass,
    pub mesh: usize,
    pub triangle: usize,
}

struct Tri {
    a: Point3,
    edge_ab: Vec3,
    edge_ac: Vec3,
    mesh: usize,
    triangle: usize,
    /// Corner classes (a, b, c); a hit takes the class of the corner with
    /// the largest barycentric weight.
    classes: [TissueClass; 3],
}

impl Tri {
    fn centroid(&self, axis: usize) -> f64 {
        self.a.coord(axis) + (self.edge_ab.to_point().coord(axis) + self.edge_ac.to_point().coord(axis)) / 3.0
    }
}

#[derive(Clone, Copy)]
struct Aabb {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: [f64::INFINITY; 3],
            hi: [f64::NEG_INFINITY; 3],
        }
    }

    fn grow_point(&mut self, p: &Point3) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p.coord(a));
            self.hi[a] = self.hi[a].max(p.coord(a));
        }
    }

    fn grow_tri(&mut self, t: &Tri) {
        self.grow_point(&t.a);
        self.grow_point(&(t.a + t.edge_ab));
        self.grow_point(&(t.a + t.edge_ac));
    }

    fn of_range(tris: &[Tri], order: &[u32]) -> Self {
        let mut b = Self::empty();
        for &i in order {
            b.grow_tri(&tris[i as usize]);
        }
        b
    }

    /// Slab test; returns the entry parameter if the ray touches the box
    /// at or before `t_max`. Zero direction components are handled apart:
    /// `0 * inf` would poison the slab bounds with NaN.
    fn hit(&self, origin: &Point3, inv_dir: &[f64; 3], t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let o = origin.coord(a);
            if inv_dir[a].is_infinite() {
                if o < self.lo[a] || o > self.hi[a] {
                    return None;
                }
                continue;
            }
            let lo = (self.lo[a] - o) * inv_dir[a];
            let hi = (self.hi[a] - o) * inv_dir[a];
            let (near, far) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

enum Node {
    Leaf {
        start: u32,
        count: u32,
    },
    Inner {
        bbox: [Aabb; 2],
        children: [u32; 2],
    },
}

const LEAF_SIZE: usize = 4;

/// Triangle soup over one or more labeled meshes with a BVH on top.
pub struct Raycaster {
    tris: Vec<Tri>,
    nodes: Vec<Node>,
    root: u32,
    root_bbox: Aabb,
}

impl Raycaster {
    pub fn new(surfaces: &[(&TriangleMesh, &[TissueClass])]) -> Self {
        let mut tris = Vec::new();
        for (mesh_idx, (mesh, classes)) in surfaces.iter().enumerate() {
            for (t, tri) in mesh.triangles().iter().enumerate() {
                let [a, b, c] = mesh.triangle_points(t);
                tris.push(Tri {
                    a: *a,
                    edge_ab: *b - *a,
                    edge_ac: *c - *a,
                    mesh: mesh_idx,
                    triangle: t,
                    classes: [
                        classes[tri[0] as usize],
                        classes[tri[1] as usize],
                        classes[tri[2] as usize],
                    ],
                });
            }
        }
        let mut nodes = Vec::new();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let root_bbox = Aabb::of_range(&tris, &order);
        let root = if tris.is_empty() {
            0
        } else {
            build_range(&tris, &mut order, 0, &mut nodes)
        };
        // Lay the soup out in leaf order so leaves address contiguous runs.
        let mut reordered = Vec::with_capacity(tris.len());
        let mut taken: Vec<Option<Tri>> = tris.into_iter().map(Some).collect();
        for &old in &order {
            reordered.push(taken[old as usize].take().expect("each tri moves once"));
        }
        Self {
            tris: reordered,
            nodes,
            root,
            root_bbox,
        }
    }

    /// First surface hit along `origin + t * dir` for `t > 0`, or `None`.
    /// Ties on `t` resolve to the lowest (mesh, triangle) pair.
    pub fn cast(&self, origin: &Point3, dir: &Vec3) -> Option<Hit> {
        if self.tris.is_empty() {
            return None;
        }
        let inv_dir = [1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z];
        let mut best: Option<(f64, f64, f64, usize)> = None;
        if self.root_bbox.hit(origin, &inv_dir, f64::INFINITY).is_some() {
            self.cast_rec(self.root, origin, dir, &inv_dir, &mut best);
        }
        best.map(|(t, u, v, idx)| self.make_hit(t, u, v, idx, origin, dir))
    }

    fn make_hit(&self, t: f64, u: f64, v: f64, idx: usize, origin: &Point3, dir: &Vec3) -> Hit {
        let tri = &self.tris[idx];
        let w = 1.0 - u - v;
        let corner = if w >= u && w >= v {
            0
        } else if u >= v {
            1
        } else {
            2
        };
        Hit {
            t,
            point: *origin + dir.scale(t),
            class: tri.classes[corner],
            mesh: tri.mesh,
            triangle: tri.triangle,
        }
    }

    fn better(&self, t: f64, idx: usize, best: &Option<(f64, f64, f64, usize)>) -> bool {
        match best {
            None => true,
            Some((bt, _, _, bidx)) => {
                let tri = &self.tris[idx];
                let btri = &self.tris[*bidx];
                t < *bt || (t == *bt && (tri.mesh, tri.triangle) < (btri.mesh, btri.triangle))
            }
        }
    }

    fn cast_rec(
        &self,
        node: u32,
        origin: &Point3,
        dir: &Vec3,
        inv_dir: &[f64; 3],
        best: &mut Option<(f64, f64, f64, usize)>,
    ) {
        match &self.nodes[node as usize] {
            Node::Leaf { start, count } => {
                for idx in *start as usize..(*start + *count) as usize {
                    if let Some((t, u, v)) = intersect(&self.tris[idx], origin, dir) {
                        if self.better(t, idx, best) {
                            *best = Some((t, u, v, idx));
                        }
                    }
                }
            }
            Node::Inner { bbox, children } => {
                let t_max = best.map_or(f64::INFINITY, |(t, ..)| t);
                let h0 = bbox[0].hit(origin, inv_dir, t_max);
                let h1 = bbox[1].hit(origin, inv_dir, t_max);
                match (h0, h1) {
                    (Some(a), Some(b)) => {
                        let (first, second) = if a <= b { (0, 1) } else { (1, 0) };
                        self.cast_rec(children[first], origin, dir, inv_dir, best);
                        let t_max = best.map_or(f64::INFINITY, |(t, ..)| t);
                        let far_entry = if first == 0 { b } else { a };
                        if far_entry <= t_max {
                            self.cast_rec(children[second], origin, dir, inv_dir, best);
                        }
                    }
                    (Some(_), None) => self.cast_rec(children[0], origin, dir, inv_dir, best),
                    (None, Some(_)) => self.cast_rec(children[1], origin, dir, inv_dir, best),
                    (None, None) => {}
                }
            }
        }
    }

    /// Brute-force first hit over every triangle; the independent
    /// visibility oracle used in tests.
    pub fn cast_brute_force(&self, origin: &Point3, dir: &Vec3) -> Option<Hit> {
        let mut best: Option<(f64, f64, f64, usize)> = None;
        for idx in 0..self.tris.len() {
            if let Some((t, u, v)) = intersect(&self.tris[idx], origin, dir) {
                if self.better(t, idx, &best) {
                    best = Some((t, u, v, idx));
                }
            }
        }
        best.map(|(t, u, v, idx)| self.make_hit(t, u, v, idx, origin, dir))
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }
}

/// Moller-Trumbore intersection returning `(t, u, v)` with barycentric
/// coordinates of the hit.
fn intersect(tri: &Tri, origin: &Point3, dir: &Vec3) -> Option<(f64, f64, f64)> {
    let pvec = dir.cross(&tri.edge_ac);
    let det = tri.edge_ab.dot(&pvec);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = *origin - tri.a;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&tri.edge_ab);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = tri.edge_ac.dot(&qvec) * inv_det;
    if t > T_MIN {
        Some((t, u, v))
    } else {
        None
    }
}

/// Recursively partitions `order` by the median centroid along the widest
/// axis; returns the node index.
fn build_range(tris: &[Tri], order: &mut [u32], base: u32, nodes: &mut Vec<Node>) -> u32 {
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: base,
            count: order.len() as u32,
        });
        return (nodes.len() - 1) as u32;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for a in 0..3 {
            let c = tris[i as usize].centroid(a);
            lo[a] = lo[a].min(c);
            hi[a] = hi[a].max(c);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if hi[a] - lo[a] > hi[axis] - lo[axis] {
            axis = a;
        }
    }
    order.sort_unstable_by(|&x, &y| {
        tris[x as usize]
            .centroid(axis)
            .total_cmp(&tris[y as usize].centroid(axis))
            .then(x.cmp(&y))
    });
    let mid = order.len() / 2;
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build_range(tris, left_slice, base, nodes);
    let right = build_range(tris, right_slice, base + mid as u32, nodes);
    let bbox = [
        Aabb::of_range(tris, left_slice),
        Aabb::of_range(tris, right_slice),
    ];
    nodes.push(Node::Inner {
        bbox,
        children: [left, right],
    });
    (nodes.len() - 1) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(z: f64, half: f64) -> TriangleMesh {
        let v = vec![
            Point3::new(-half, -half, z),
            Point3::new(half, -half, z),
            Point3::new(half, half, z),
            Point3::new(-half, half, z),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn ray_hits_wall_at_expected_depth() {
        let mesh = wall(300.0, 100.0);
        let classes = vec![TissueClass::Healthy; 4];
        let rc = Raycaster::new(&[(&mesh, &classes)]);
        let hit = rc
            .cast(&Point3::ORIGIN, &Vec3::new(0.0, 0.0, 1.0))
            .expect("hit");
        assert!((hit.t - 300.0).abs() < 1e-9);
        assert_eq!(hit.class, TissueClass::Healthy);
    }

    #[test]
    fn nearer_surface_occludes_farther() {
        let near = wall(100.0, 50.0);
        let far = wall(300.0, 200.0);
        let nc = vec![TissueClass::Tumor; 4];
        let fc = vec![TissueClass::Healthy; 4];
        let rc = Raycaster::new(&[(&far, &fc), (&near, &nc)]);
        let hit = rc
            .cast(&Point3::ORIGIN, &Vec3::new(0.0, 0.0, 1.0))
            .expect("hit");
        assert!((hit.t - 100.0).abs() < 1e-9);
        assert_eq!(hit.class, TissueClass::Tumor);
        // Off to the side only the far wall exists.
        let side = rc
            .cast(&Point3::new(150.0, 0.0, 0.0), &Vec3::new(0.0, 0.0, 1.0))
            .expect("hit");
        assert!((side.t - 300.0).abs() < 1e-9);
        assert_eq!(side.class, TissueClass::Healthy);
    }

    #[test]
    fn miss_returns_none() {
        let mesh = wall(300.0, 10.0);
        let classes = vec![TissueClass::Healthy; 4];
        let rc = Raycaster::new(&[(&mesh, &classes)]);
        assert!(rc
            .cast(&Point3::ORIGIN, &Vec3::new(0.0, 1.0, 0.0))
            .is_none());
    }

    #[test]
    fn bvh_matches_brute_force_on_a_sphere() {
        let (verts, tris) = crate::phantom::generate::icosphere(3);
        let pts: Vec<Point3> = verts.iter().map(|v| v.scale(50.0).to_point()).collect();
        let mesh = TriangleMesh::new(pts, tris).unwrap();
        let classes = vec![TissueClass::Healthy; mesh.vertices().len()];
        let rc = Raycaster::new(&[(&mesh, &classes)]);
        let origin = Point3::new(0.0, 0.0, -200.0);
        for iy in -20..=20 {
            for ix in -20..=20 {
                let dir = Vec3::new(ix as f64 * 0.02, iy as f64 * 0.02, 1.0)
                    .normalized()
                    .unwrap();
                let fast = rc.cast(&origin, &dir);
                let slow = rc.cast_brute_force(&origin, &dir);
                match (fast, slow) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        assert_eq!(
                            (a.mesh, a.triangle),
                            (b.mesh, b.triangle),
                            "ray ({ix},{iy}): bvh t={} brute t={}",
                            a.t,
                            b.t
                        );
                        assert!((a.t - b.t).abs() < 1e-12);
                    }
                    other => panic!("bvh/brute mismatch: {other:?}"),
                }
            }
        }
    }
}
