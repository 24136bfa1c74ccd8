//! Indexed triangle mesh with optional per-vertex unit normals.

use std::collections::HashMap;

use super::{GeometryError, Point3, Vec3};

/// Minimum triangle area (mm^2) below which a triangle is degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

const NORMAL_UNIT_TOL: f64 = 1e-9;

/// An indexed triangle surface. Vertices not referenced by any triangle
/// are allowed (reconstruction keeps cloud indexing intact).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        for (ti, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v as usize >= vertices.len() {
                    return Err(GeometryError::IndexOutOfBounds {
                        triangle: ti,
                        index: v,
                        vertex_count: vertices.len(),
                    });
                }
            }
            let area = triangle_area(
                &vertices[tri[0] as usize],
                &vertices[tri[1] as usize],
                &vertices[tri[2] as usize],
            );
            if area < MIN_TRIANGLE_AREA {
                return Err(GeometryError::DegenerateTriangle(ti, area));
            }
        }
        for v in &vertices {
            if !v.is_finite() {
                return Err(GeometryError::NonFiniteCoordinate);
            }
        }
        Ok(Self {
            vertices,
            triangles,
            normals: None,
        })
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self, GeometryError> {
        if normals.len() != self.vertices.len() {
            return Err(GeometryError::NormalCountMismatch {
                normals: normals.len(),
                vertices: self.vertices.len(),
            });
        }
        for (i, n) in normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > NORMAL_UNIT_TOL {
                return Err(GeometryError::NonUnitNormal(i, n.norm()));
            }
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    pub fn triangle_points(&self, t: usize) -> [&Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            &self.vertices[a as usize],
            &self.vertices[b as usize],
            &self.vertices[c as usize],
        ]
    }

    /// Unit normal of triangle `t` following its winding order.
    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle_points(t);
        (*b - *a).cross(&(*c - *a)).normalized().unwrap_or(Vec3::Z)
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        triangle_area(a, b, c)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Area-weighted average of incident triangle normals per vertex,
    /// renormalized. Vertices without incident triangles get a zero vector.
    pub fn area_weighted_vertex_normals(&self) -> Vec<Vec3> {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = self.triangle_points(t);
            // Cross product length is 2x area, so this is area weighting.
            let weighted = (*b - *a).cross(&(*c - *a));
            for &v in tri {
                acc[v as usize] = acc[v as usize] + weighted.scale(0.5);
            }
        }
        acc.into_iter()
            .map(|n| n.normalized().unwrap_or(Vec3::ZERO))
            .collect()
    }

    /// Number of triangles incident to each undirected edge.
    pub fn edge_face_counts(&self) -> HashMap<(u32, u32), u32> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                let key = if a < b { (a, b) } else { (b, a) };
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Undirected edges with exactly one incident triangle.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let mut edges: Vec<(u32, u32)> = self
            .edge_face_counts()
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    /// Boundary edges grouped into connected loops (or open chains when the
    /// boundary is defective), each returned as a vertex sequence.
    pub fn boundary_loops(&self) -> Vec<Vec<u32>> {
        let (mut closed, open) = chain_edges(&self.boundary_edges());
        closed.extend(open);
        closed.sort_by_key(|l| std::cmp::Reverse(l.len()));
        closed
    }

    /// Adjacency over undirected mesh edges, vertex index -> sorted neighbors.
    pub fn vertex_adjacency(&self) -> HashMap<u32, Vec<u32>> {
        let mut adj: HashMap<u32, Vec<u32>> = HashMap::new();
        for tri in &self.triangles {
            for (a, b) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])] {
                adj.entry(a).or_default().push(b);
                adj.entry(b).or_default().push(a);
            }
        }
        for n in adj.values_mut() {
            n.sort_unstable();
            n.dedup();
        }
        adj
    }
}

pub fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (*b - *a).cross(&(*c - *a)).norm()
}

/// Chains an undirected edge set into vertex sequences, each edge used
/// once, stepping to the lowest-index unused neighbor first. Returns
/// (closed cycles, open chains).
pub fn chain_edges(edges: &[(u32, u32)]) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let mut adjacency: HashMap<u32, Vec<u32>> = HashMap::new();
    for &(a, b) in edges {
        adjacency.entry(a).or_default().push(b);
        adjacency.entry(b).or_default().push(a);
    }
    for n in adjacency.values_mut() {
        n.sort_unstable();
    }
    let mut starts: Vec<u32> = adjacency.keys().copied().collect();
    starts.sort_unstable();
    let mut used: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    let key = |a: u32, b: u32| (a.min(b), a.max(b));
    let mut closed = Vec::new();
    let mut open = Vec::new();
    for &start in &starts {
        loop {
            // A vertex can sit on several loops (non-manifold pinch);
            // keep walking from it while unused edges remain.
            if adjacency[&start].iter().all(|&n| used.contains(&key(start, n))) {
                break;
            }
            let mut walk = vec![start];
            let mut current = start;
            let is_closed = loop {
                let next = adjacency[&current]
                    .iter()
                    .copied()
                    .find(|&n| !used.contains(&key(current, n)));
                match next {
                    Some(n) => {
                        used.insert(key(current, n));
                        if n == start {
                            break true;
                        }
                        walk.push(n);
                        current = n;
                    }
                    None => break false,
                }
            };
            if is_closed && walk.len() >= 3 {
                closed.push(walk);
            } else {
                open.push(walk);
            }
        }
    }
    (closed, open)
}
