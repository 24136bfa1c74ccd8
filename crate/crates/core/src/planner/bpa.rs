//! Ball-pivoting surface reconstruction.
//!
//! A ball of fixed radius rests on three points (its interior empty of
//! all other points) and pivots around each front edge to the first point
//! it touches, emitting a triangle per rest position. The front expands
//! until no pivot succeeds; unreached regions are re-seeded. Orientation
//! propagates from each seed through the front, so shared edges are
//! always traversed in opposite directions by their two triangles.
//!
//! The input point order is preserved: output mesh vertices are exactly
//! the input points, so per-point labels stay index-aligned.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::geometry::{Point3, SpatialIndex, TriangleMesh, Vec3};

use super::PlanError;

/// Points closer than this fraction of the radius to the ball center count
/// as inside it (rejecting the rest position).
const INTERIOR_REL_TOL: f64 = 1e-7;

/// Maximum pivot rotation (radians). Without point normals this is what
/// keeps the ball from rolling around a sheet boundary and meshing the
/// underside: boundary wraps need rotations near pi, while pivots across
/// a sampled surface stay far below this even at sharp convex creases.
const MAX_PIVOT_ANGLE: f64 = 2.0;

/// Below this pivot rotation the new ball is (nearly) co-spherical with
/// the current one, and the rotation angle cannot tell the far side from
/// a fold-back onto the old triangle; an explicit side test does.
const COSPHERICAL_ANGLE: f64 = 0.1;

/// Default pivot radius rule: twice the median nearest-neighbor spacing.
pub fn suggested_ball_radius(points: &[Point3]) -> Option<f64> {
    let index = SpatialIndex::new(points.to_vec());
    index.median_neighbor_spacing().map(|s| 2.0 * s)
}

pub fn reconstruct_surface(points: &[Point3], radius: f64) -> Result<TriangleMesh, PlanError> {
    if !(radius > 0.0) {
        return Err(PlanError::NonPositiveRadius(radius));
    }
    if points.len() < 3 {
        return Err(PlanError::TooFewPoints(points.len()));
    }
    let index = SpatialIndex::new(points.to_vec());
    let mut state = Bpa {
        points,
        index: &index,
        radius,
        triangles: Vec::new(),
        edge_faces: HashMap::new(),
        front: VecDeque::new(),
        in_front: HashSet::new(),
        front_degree: vec![0; points.len()],
        used: vec![false; points.len()],
    };
    state.run()?;
    let mesh = TriangleMesh::new(points.to_vec(), state.triangles)?;
    Ok(mesh)
}

struct FrontEdge {
    a: u32,
    b: u32,
    opposite: u32,
    center: Point3,
}

struct Bpa<'a> {
    points: &'a [Point3],
    index: &'a SpatialIndex,
    radius: f64,
    triangles: Vec<[u32; 3]>,
    edge_faces: HashMap<(u32, u32), u8>,
    front: VecDeque<FrontEdge>,
    /// Directed edges currently on the front.
    in_front: HashSet<(u32, u32)>,
    /// Number of front edges incident to each vertex.
    front_degree: Vec<u32>,
    used: Vec<bool>,
}

impl Bpa<'_> {
    fn run(&mut self) -> Result<(), PlanError> {
        let max_triangles = 4 * self.points.len();
        let mut seed_cursor = 0usize;
        let mut seeded = false;
        loop {
            while let Some(edge) = self.front.pop_front() {
                if !self.in_front.remove(&(edge.a, edge.b)) {
                    continue; // glued away while queued
                }
                self.front_degree[edge.a as usize] -= 1;
                self.front_degree[edge.b as usize] -= 1;
                if self.edge_count(edge.a, edge.b) >= 2 {
                    continue;
                }
                if self.triangles.len() >= max_triangles {
                    log::warn!(
                        "ball pivoting stopped at the triangle budget ({} triangles)",
                        self.triangles.len()
                    );
                    return Ok(());
                }
                if let Some((k, center)) = self.pivot(&edge) {
                    self.add_triangle([edge.b, edge.a, k], center);
                }
                // No pivot: the edge stays a boundary edge.
            }
            match self.find_seed(&mut seed_cursor) {
                Some((tri, center)) => {
                    seeded = true;
                    self.add_triangle(tri, center);
                }
                None => break,
            }
        }
        if !seeded {
            let suggested = suggested_ball_radius(self.points).unwrap_or(self.radius);
            return Err(PlanError::ReconstructionFailed {
                radius: self.radius,
                suggested,
            });
        }
        Ok(())
    }

    fn edge_count(&self, a: u32, b: u32) -> u8 {
        *self
            .edge_faces
            .get(&(a.min(b), a.max(b)))
            .unwrap_or(&0)
    }

    fn add_triangle(&mut self, tri: [u32; 3], center: Point3) {
        self.triangles.push(tri);
        for &v in &tri {
            self.used[v as usize] = true;
        }
        for (s, t) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
            let key = (s.min(t), s.max(t));
            let count = self.edge_faces.entry(key).or_insert(0);
            *count += 1;
            if self.in_front.remove(&(t, s)) {
                // Glue: the reverse edge waited on the front and is now
                // closed from both sides.
                self.front_degree[s as usize] -= 1;
                self.front_degree[t as usize] -= 1;
            } else if *count < 2 {
                let opposite = tri
                    .iter()
                    .copied()
                    .find(|&v| v != s && v != t)
                    .expect("triangle has a third vertex");
                self.in_front.insert((s, t));
                self.front_degree[s as usize] += 1;
                self.front_degree[t as usize] += 1;
                self.front.push_back(FrontEdge {
                    a: s,
                    b: t,
                    opposite,
                    center,
                });
            }
        }
    }

    /// Rolls the ball around the edge away from its triangle; returns the
    /// first point it touches together with the new ball center.
    fn pivot(&self, edge: &FrontEdge) -> Option<(u32, Point3)> {
        let pa = self.points[edge.a as usize];
        let pb = self.points[edge.b as usize];
        let po = self.points[edge.opposite as usize];
        let m = pa.midpoint(&pb);
        let mut axis = (pb - pa).normalized()?;
        let v_old = edge.center - m;
        // Rotation must initially move the center away from the opposite
        // vertex, i.e. roll over the edge rather than back over the face.
        if axis.cross(&v_old).dot(&(m - po)) < 0.0 {
            axis = -axis;
        }
        // Plane spanned by the edge and the current center separates the
        // old triangle's side from the far side.
        let side_normal = axis.cross(&v_old);
        let side_old = side_normal.dot(&(po - m));

        let candidates = self
            .index
            .radius_query(&m, 2.0 * self.radius * (1.0 + 1e-9))
            .expect("positive radius");
        let mut positions: Vec<(f64, u32, Point3)> = Vec::new();
        for idx in candidates {
            let k = idx as u32;
            if k == edge.a || k == edge.b || k == edge.opposite {
                continue;
            }
            // Interior vertices (used but no longer on the front) would
            // produce non-manifold fans.
            if self.used[idx] && self.front_degree[idx] == 0 {
                continue;
            }
            if self.edge_count(edge.a, k) >= 2 || self.edge_count(k, edge.b) >= 2 {
                continue;
            }
            // The new triangle traverses (a -> k) and (k -> b); a front
            // edge already traversing either direction means a second
            // triangle with the same orientation, which is non-manifold.
            if self.in_front.contains(&(edge.a, k)) || self.in_front.contains(&(k, edge.b)) {
                continue;
            }
            let pk = self.points[idx];
            let Some(centers) = ball_centers(&pa, &pb, &pk, self.radius) else {
                continue;
            };
            for c in centers {
                let theta = pivot_angle(&axis, &v_old, &(c - m));
                if theta > MAX_PIVOT_ANGLE {
                    continue;
                }
                if theta < COSPHERICAL_ANGLE && side_normal.dot(&(pk - m)) * side_old >= 0.0 {
                    continue; // fold-back onto the old triangle's side
                }
                positions.push((theta, k, c));
            }
        }
        positions.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for (_, k, center) in positions {
            if self.ball_is_empty(&center, [edge.a, edge.b, k]) {
                return Some((k, center));
            }
        }
        None
    }

    fn ball_is_empty(&self, center: &Point3, exclude: [u32; 3]) -> bool {
        let limit = self.radius * (1.0 - INTERIOR_REL_TOL);
        let hits = self
            .index
            .radius_query(center, limit)
            .expect("positive radius");
        hits.iter()
            .all(|&i| exclude.contains(&(i as u32)))
    }

    /// Scans for a triangle the ball can rest on among unused vertices.
    fn find_seed(&mut self, cursor: &mut usize) -> Option<([u32; 3], Point3)> {
        while *cursor < self.points.len() {
            let i = *cursor;
            *cursor += 1;
            if self.used[i] {
                continue;
            }
            let p = self.points[i];
            let mut neighbors: Vec<usize> = self
                .index
                .radius_query(&p, 2.0 * self.radius)
                .expect("positive radius")
                .into_iter()
                .filter(|&j| j != i && !self.used[j])
                .collect();
            neighbors.sort_by(|&x, &y| {
                p.distance_sq(&self.points[x])
                    .total_cmp(&p.distance_sq(&self.points[y]))
                    .then(x.cmp(&y))
            });
            neighbors.truncate(32);
            for (ji, &j) in neighbors.iter().enumerate() {
                for &k in neighbors.iter().skip(ji + 1) {
                    let Some(centers) =
                        ball_centers(&p, &self.points[j], &self.points[k], self.radius)
                    else {
                        continue;
                    };
                    for c in centers {
                        if self.ball_is_empty(&c, [i as u32, j as u32, k as u32]) {
                            // Wind the seed so its normal faces the ball.
                            let n = (self.points[j] - p).cross(&(self.points[k] - p));
                            let tri = if n.dot(&(c - p.midpoint(&self.points[j]))) >= 0.0 {
                                [i as u32, j as u32, k as u32]
                            } else {
                                [i as u32, k as u32, j as u32]
                            };
                            return Some((tri, c));
                        }
                    }
                }
            }
        }
        None
    }
}

/// Centers of the two balls of radius `r` touching all three points, or
/// `None` when the circumradius exceeds `r` or the points are collinear.
fn ball_centers(a: &Point3, b: &Point3, c: &Point3, r: f64) -> Option<[Point3; 2]> {
    let alpha = (*b - *c).norm_sq() * (*a - *b).dot(&(*a - *c));
    let beta = (*a - *c).norm_sq() * (*b - *a).dot(&(*b - *c));
    let gamma = (*a - *b).norm_sq() * (*c - *a).dot(&(*c - *b));
    let denom = alpha + beta + gamma;
    if denom.abs() < 1e-24 {
        return None;
    }
    let cc = Point3::new(
        (alpha * a.x + beta * b.x + gamma * c.x) / denom,
        (alpha * a.y + beta * b.y + gamma * c.y) / denom,
        (alpha * a.z + beta * b.z + gamma * c.z) / denom,
    );
    let rc_sq = cc.distance_sq(a);
    let h_sq = r * r - rc_sq;
    if h_sq < 0.0 {
        return None;
    }
    let n = (*b - *a).cross(&(*c - *a)).normalized()?;
    let h = h_sq.sqrt();
    Some([cc + n.scale(h), cc - n.scale(h)])
}

/// Rotation angle in [0, 2*pi) carrying `from` onto `to` around `axis`.
fn pivot_angle(axis: &Vec3, from: &Vec3, to: &Vec3) -> f64 {
    let theta = axis.cross(from).dot(to).atan2(from.dot(to));
    if theta < 0.0 {
        theta + 2.0 * std::f64::consts::PI
    } else {
        theta
    }
}
