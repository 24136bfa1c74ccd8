//! Incision-loop extraction. The margin and tumor vertices form the
//! resection region; removing every triangle that touches it leaves the
//! healthy submesh, whose boundary around that hole is exactly the set of
//! kidney points connecting to the incision margin. Boundary edges of a
//! submesh chain into closed cycles, so the loop closes whenever the
//! margin is fully encircled by observed surface.

use std::collections::HashSet;

use crate::cloud::TissueClass;
use crate::geometry::{chain_edges, TriangleMesh};

use super::{MarginSet, PlanError};

/// Ordered closed loop plus any secondary loops and open fragments found.
#[derive(Debug, Clone)]
pub struct IncisionLoop {
    /// The largest closed loop, in walk order (implicitly closed).
    pub vertices: Vec<u32>,
    /// Smaller closed loops (e.g. satellite tumors), largest first.
    pub other_loops: Vec<Vec<u32>>,
    /// Open chains that could not be closed (margin reaching into
    /// unobserved surface).
    pub fragments: Vec<Vec<u32>>,
}

/// Extracts the incision loop from a reconstructed surface whose vertices
/// are index-aligned with `labels` (margin labels already applied).
pub fn extract_incision_loop(
    mesh: &TriangleMesh,
    labels: &[TissueClass],
    margins: &MarginSet,
) -> Result<IncisionLoop, PlanError> {
    if mesh.vertices().len() != labels.len() {
        return Err(PlanError::MeshCloudMismatch {
            mesh: mesh.vertices().len(),
            cloud: labels.len(),
        });
    }
    let mut margin_flags = vec![false; labels.len()];
    for &i in &margins.indices {
        margin_flags[i] = true;
    }
    let inner =
        |v: u32| margin_flags[v as usize] || labels[v as usize] == TissueClass::Tumor;

    // A margin clipped by the cloud's visible edge cannot be encircled.
    // The visible edge is the longest boundary walk of the full mesh;
    // interior pinholes and occlusion holes have much shorter ones and
    // stay eligible so the loop can detour around them.
    let full_boundary = mesh.boundary_edges();
    let (closed_walks, open_walks) = chain_edges(&full_boundary);
    let longest_walk: Option<(&Vec<u32>, bool)> = closed_walks
        .iter()
        .map(|w| (w, true))
        .chain(open_walks.iter().map(|w| (w, false)))
        .max_by_key(|(w, _)| w.len());
    let mut outer_edge_set: HashSet<(u32, u32)> = HashSet::new();
    if let Some((outer, is_closed)) = longest_walk {
        if outer.iter().any(|&v| margin_flags[v as usize]) {
            return Err(PlanError::MarginAtCloudBoundary);
        }
        for i in 0..outer.len() {
            if i + 1 == outer.len() && !is_closed {
                break;
            }
            let a = outer[i];
            let b = outer[(i + 1) % outer.len()];
            outer_edge_set.insert((a.min(b), a.max(b)));
        }
    }
    let full_boundary_set = outer_edge_set;

    // Healthy-side submesh: triangles not touching the resection region.
    let outside_tris: Vec<[u32; 3]> = mesh
        .triangles()
        .iter()
        .copied()
        .filter(|t| !t.iter().any(|&v| inner(v)))
        .collect();
    if outside_tris.is_empty() {
        return Err(PlanError::MarginAtCloudBoundary);
    }
    let mut edge_counts: std::collections::HashMap<(u32, u32), u32> =
        std::collections::HashMap::new();
    for t in &outside_tris {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = if a < b { (a, b) } else { (b, a) };
            *edge_counts.entry(key).or_insert(0) += 1;
        }
    }
    // The hole boundary around the resection region: submesh boundary
    // edges that are interior edges of the full mesh.
    let mut incision_edges: Vec<(u32, u32)> = edge_counts
        .into_iter()
        .filter(|&(e, c)| c == 1 && !full_boundary_set.contains(&e))
        .map(|(e, _)| e)
        .collect();
    incision_edges.sort_unstable();
    if incision_edges.is_empty() {
        return Err(PlanError::MarginAtCloudBoundary);
    }

    let (closed, open) = chain_edges(&incision_edges);

    // Keep only cycles around the resection region: some vertex must share
    // a full-mesh edge with a margin vertex. Small pinhole boundaries away
    // from the margin are dropped.
    let adjacency = mesh.vertex_adjacency();
    let touches_margin = |walk: &[u32]| {
        walk.iter().any(|v| {
            adjacency
                .get(v)
                .map(|ns| ns.iter().any(|&n| margin_flags[n as usize]))
                .unwrap_or(false)
        })
    };
    let mut loops: Vec<Vec<u32>> = closed.into_iter().filter(|l| touches_margin(l)).collect();
    let fragments: Vec<Vec<u32>> = open.into_iter().filter(|l| touches_margin(l)).collect();
    if loops.is_empty() {
        let sizes: Vec<usize> = fragments.iter().map(Vec::len).collect();
        return Err(PlanError::FragmentedBoundary(sizes));
    }
    loops.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let vertices = loops.remove(0);
    Ok(IncisionLoop {
        vertices,
        other_loops: loops,
        fragments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use crate::planner::reconstruct_surface;

    /// Grid cloud with disk-shaped labels around one or more centers:
    /// tumor inside `r_tumor`, margin inside `r_margin`.
    fn labeled_grid(
        n: usize,
        centers: &[(f64, f64, f64, f64)], // (cx, cy, r_tumor, r_margin)
        drop: impl Fn(f64, f64) -> bool,
    ) -> (Vec<Point3>, Vec<TissueClass>, MarginSet) {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for y in 0..n {
            for x in 0..n {
                let (fx, fy) = (x as f64, y as f64);
                if drop(fx, fy) {
                    continue;
                }
                points.push(Point3::new(fx, fy, 0.0));
                let mut label = TissueClass::Healthy;
                for &(cx, cy, rt, rm) in centers {
                    let d = ((fx - cx).powi(2) + (fy - cy).powi(2)).sqrt();
                    if d <= rt {
                        label = TissueClass::Tumor;
                        break;
                    } else if d <= rm {
                        label = TissueClass::Margin;
                    }
                }
                labels.push(label);
            }
        }
        let indices = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == TissueClass::Margin)
            .map(|(i, _)| i)
            .collect();
        (
            points,
            labels,
            MarginSet {
                indices,
                margin_mm: 5.0,
            },
        )
    }

    /// Winding number of the loop's xy-projection around a point.
    fn winding_number(points: &[Point3], loop_vertices: &[u32], about: (f64, f64)) -> f64 {
        let mut total = 0.0;
        let n = loop_vertices.len();
        for i in 0..n {
            let p = &points[loop_vertices[i] as usize];
            let q = &points[loop_vertices[(i + 1) % n] as usize];
            let a1 = (p.y - about.1).atan2(p.x - about.0);
            let a2 = (q.y - about.1).atan2(q.x - about.0);
            let mut da = a2 - a1;
            while da > std::f64::consts::PI {
                da -= 2.0 * std::f64::consts::PI;
            }
            while da < -std::f64::consts::PI {
                da += 2.0 * std::f64::consts::PI;
            }
            total += da;
        }
        total / (2.0 * std::f64::consts::PI)
    }

    #[test]
    fn single_tumor_yields_one_encircling_loop() {
        let (points, labels, margins) =
            labeled_grid(24, &[(11.5, 11.5, 3.0, 6.0)], |_, _| false);
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        let result = extract_incision_loop(&mesh, &labels, &margins).unwrap();
        assert!(result.other_loops.is_empty());
        assert!(result.vertices.len() >= 12);
        let w = winding_number(&points, &result.vertices, (11.5, 11.5));
        assert!(
            (w.abs() - 1.0).abs() < 1e-9,
            "loop must wind once around the tumor, got {w}"
        );
        // Loop vertices stay on healthy tissue, outside the margin.
        for &v in &result.vertices {
            assert_eq!(labels[v as usize], TissueClass::Healthy);
        }
    }

    #[test]
    fn margin_touching_cloud_edge_is_an_error() {
        let (points, labels, margins) =
            labeled_grid(24, &[(0.0, 11.5, 3.0, 6.0)], |_, _| false);
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        assert!(matches!(
            extract_incision_loop(&mesh, &labels, &margins),
            Err(PlanError::MarginAtCloudBoundary)
        ));
    }

    #[test]
    fn two_tumors_return_largest_loop_and_report_other() {
        let (points, labels, margins) = labeled_grid(
            30,
            &[(9.0, 9.0, 3.0, 6.0), (22.0, 22.0, 1.5, 3.0)],
            |_, _| false,
        );
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        let result = extract_incision_loop(&mesh, &labels, &margins).unwrap();
        assert_eq!(result.other_loops.len(), 1);
        assert!(result.vertices.len() > result.other_loops[0].len());
        let w_big = winding_number(&points, &result.vertices, (9.0, 9.0));
        assert!((w_big.abs() - 1.0).abs() < 1e-9);
        let w_small = winding_number(&points, &result.other_loops[0], (22.0, 22.0));
        assert!((w_small.abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_hole_near_margin_detours_the_loop() {
        // A hole in the cloud next to the margin band: the incision
        // boundary routes around the unobserved region and still closes.
        let (points, labels, margins) =
            labeled_grid(24, &[(11.5, 11.5, 3.0, 5.0)], |x, y| {
                let dx = x - 11.5;
                let dy = y - 11.5;
                let d = (dx * dx + dy * dy).sqrt();
                dx > 0.0 && dy.abs() <= 2.5 && (5.2..9.5).contains(&d)
            });
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        let result = extract_incision_loop(&mesh, &labels, &margins).unwrap();
        let w = winding_number(&points, &result.vertices, (11.5, 11.5));
        assert!((w.abs() - 1.0).abs() < 1e-9, "detour loop must still encircle");
    }

    #[test]
    fn gap_reaching_the_horizon_is_fragmented() {
        // The unobserved wedge connects the margin's surroundings to the
        // outer rim while the margin itself stays interior: no closed loop
        // can separate the margin from the edge.
        let (points, labels, margins) =
            labeled_grid(24, &[(11.5, 11.5, 3.0, 5.0)], |x, y| {
                let dx = x - 11.5;
                let dy = y - 11.5;
                let d = (dx * dx + dy * dy).sqrt();
                dx > 0.0 && dy.abs() <= 2.5 && d >= 6.0
            });
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        match extract_incision_loop(&mesh, &labels, &margins) {
            Err(PlanError::FragmentedBoundary(sizes)) => {
                assert!(!sizes.is_empty());
            }
            other => panic!("expected fragmented boundary, got {other:?}"),
        }
    }

    #[test]
    fn margin_up_to_the_rim_is_an_error() {
        let (points, labels, margins) =
            labeled_grid(10, &[(4.5, 4.5, 2.0, 50.0)], |_, _| false);
        let mesh = reconstruct_surface(&points, 1.5).unwrap();
        assert!(matches!(
            extract_incision_loop(&mesh, &labels, &margins),
            Err(PlanError::MarginAtCloudBoundary)
        ));
    }
}
