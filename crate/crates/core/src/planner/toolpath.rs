//! Timed tool poses along the incision loop: arc-length resampling, tool
//! axes from outward surface normals, timestamps from the tool speed.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, TriangleMesh, Vec3};

use super::PlanError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolPose {
    pub position: Point3,
    /// Unit tool axis, aligned with the outward surface normal.
    pub axis: Vec3,
}

/// Closed, timed tool path along the kidney surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncisionPath {
    pub poses: Vec<ToolPose>,
    /// Seconds from path start, strictly increasing, starting at 0.
    pub timestamps_s: Vec<f64>,
    pub closed: bool,
    pub speed_mm_s: f64,
    pub perimeter_mm: f64,
    /// Time to traverse the full perimeter back to the start.
    pub total_time_s: f64,
}

impl IncisionPath {
    pub fn positions(&self) -> Vec<Point3> {
        self.poses.iter().map(|p| p.position).collect()
    }

    /// Checks the structural invariants; returns a description of the
    /// first violation.
    pub fn check_invariants(&self, max_step_mm: f64) -> Result<(), String> {
        if self.poses.len() < 3 {
            return Err(format!("path has only {} poses", self.poses.len()));
        }
        if self.poses.len() != self.timestamps_s.len() {
            return Err("pose/timestamp length mismatch".into());
        }
        let eps = 1e-9;
        for window in self.timestamps_s.windows(2) {
            if window[1] <= window[0] {
                return Err(format!(
                    "timestamps not strictly increasing: {} then {}",
                    window[0], window[1]
                ));
            }
        }
        for (i, pair) in self.poses.windows(2).enumerate() {
            let d = pair[0].position.distance(&pair[1].position);
            if d > max_step_mm + eps {
                return Err(format!("step {i} is {d} mm, above the {max_step_mm} mm cap"));
            }
            // Timestamps follow arc length; the chord between samples can
            // only be shorter than what the tool travels in dt.
            let dt = self.timestamps_s[i + 1] - self.timestamps_s[i];
            if d > dt * self.speed_mm_s + 1e-6 {
                return Err(format!(
                    "step {i}: chord {d} mm exceeds dt * speed = {} mm",
                    dt * self.speed_mm_s
                ));
            }
        }
        for (i, pose) in self.poses.iter().enumerate() {
            if (pose.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(format!("axis {i} is not unit length"));
            }
        }
        let step = self.perimeter_mm / self.poses.len() as f64;
        let closing = self
            .poses
            .last()
            .unwrap()
            .position
            .distance(&self.poses[0].position);
        if self.closed && closing > step + eps {
            return Err(format!(
                "closing gap {closing} mm exceeds one step ({step} mm)"
            ));
        }
        Ok(())
    }
}

/// Resamples the loop by arc length at steps of at most `max_step_mm` and
/// assigns tool axes and timestamps. Chord steps never exceed the arc
/// step, so the step bound holds by construction.
pub fn make_tool_path(
    loop_vertices: &[u32],
    mesh: &TriangleMesh,
    speed_mm_s: f64,
    max_step_mm: f64,
) -> Result<IncisionPath, PlanError> {
    if !(speed_mm_s > 0.0) {
        return Err(PlanError::NonPositiveSpeed(speed_mm_s));
    }
    if !(max_step_mm > 0.0) {
        return Err(PlanError::NonPositiveStep(max_step_mm));
    }
    if loop_vertices.len() < 3 {
        return Err(PlanError::DegenerateLoop);
    }
    let positions: Vec<Point3> = loop_vertices
        .iter()
        .map(|&v| mesh.vertices()[v as usize])
        .collect();
    let normals = outward_vertex_normals(mesh);
    let loop_normals: Vec<Vec3> = loop_vertices
        .iter()
        .map(|&v| normals[v as usize])
        .collect();

    // Cumulative arc length over the closed polyline.
    let n = positions.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for i in 0..n {
        let d = positions[i].distance(&positions[(i + 1) % n]);
        cumulative.push(cumulative[i] + d);
    }
    let perimeter = cumulative[n];
    if perimeter < 1e-9 {
        return Err(PlanError::DegenerateLoop);
    }

    let samples = (perimeter / max_step_mm).ceil().max(3.0) as usize;
    let step = perimeter / samples as f64;
    let mut poses = Vec::with_capacity(samples);
    let mut timestamps = Vec::with_capacity(samples);
    let mut segment = 0usize;
    for i in 0..samples {
        let s = i as f64 * step;
        while segment + 1 < cumulative.len() - 1 && cumulative[segment + 1] <= s {
            segment += 1;
        }
        let seg_len = cumulative[segment + 1] - cumulative[segment];
        let t = if seg_len > 0.0 {
            (s - cumulative[segment]) / seg_len
        } else {
            0.0
        };
        let a = segment;
        let b = (segment + 1) % n;
        let position = positions[a].lerp(&positions[b], t);
        let axis = nlerp(&loop_normals[a], &loop_normals[b], t);
        poses.push(ToolPose { position, axis });
        timestamps.push(s / speed_mm_s);
    }
    Ok(IncisionPath {
        poses,
        timestamps_s: timestamps,
        closed: true,
        speed_mm_s,
        perimeter_mm: perimeter,
        total_time_s: perimeter / speed_mm_s,
    })
}

/// Area-weighted vertex normals oriented away from the surface interior
/// (approximated by the centroid of triangle-referenced vertices).
fn outward_vertex_normals(mesh: &TriangleMesh) -> Vec<Vec3> {
    let mut normals = mesh.area_weighted_vertex_normals();
    let mut centroid = Vec3::ZERO;
    let mut count = 0.0;
    let mut referenced = vec![false; mesh.vertices().len()];
    for tri in mesh.triangles() {
        for &v in tri {
            if !referenced[v as usize] {
                referenced[v as usize] = true;
                centroid = centroid + mesh.vertices()[v as usize].to_vec();
                count += 1.0;
            }
        }
    }
    if count > 0.0 {
        centroid = centroid.scale(1.0 / count);
    }
    for (i, n) in normals.iter_mut().enumerate() {
        if *n == Vec3::ZERO {
            *n = Vec3::Z;
            continue;
        }
        let outward = mesh.vertices()[i].to_vec() - centroid;
        if n.dot(&outward) < 0.0 {
            *n = -*n;
        }
    }
    normals
}

fn nlerp(a: &Vec3, b: &Vec3, t: f64) -> Vec3 {
    let mixed = a.scale(1.0 - t) + b.scale(t);
    mixed.normalized().unwrap_or(*a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;

    /// Planar disk: one center vertex fanned to a ring of `n` vertices.
    fn disk_mesh(n: usize, radius: f64) -> (TriangleMesh, Vec<u32>) {
        let mut vertices = vec![Point3::ORIGIN];
        for i in 0..n {
            let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            vertices.push(Point3::new(radius * a.cos(), radius * a.sin(), 0.0));
        }
        let mut triangles = Vec::new();
        for i in 0..n {
            let j = (i % n) as u32 + 1;
            let k = ((i + 1) % n) as u32 + 1;
            triangles.push([0u32, j, k]);
        }
        let ring: Vec<u32> = (1..=n as u32).collect();
        (TriangleMesh::new(vertices, triangles).unwrap(), ring)
    }

    #[test]
    fn circular_loop_time_matches_perimeter_over_speed() {
        let (mesh, ring) = disk_mesh(128, 20.0);
        let path = make_tool_path(&ring, &mesh, 2.0, 1.0).unwrap();
        // 2*pi*20 / 2 ~= 62.83 s, slightly less for the polygonal loop.
        assert!(
            (path.total_time_s - 62.83).abs() < 0.2,
            "total time {}",
            path.total_time_s
        );
        path.check_invariants(1.0).unwrap();
    }

    #[test]
    fn doubling_speed_halves_timestamps() {
        let (mesh, ring) = disk_mesh(64, 15.0);
        let slow = make_tool_path(&ring, &mesh, 2.0, 1.0).unwrap();
        let fast = make_tool_path(&ring, &mesh, 4.0, 1.0).unwrap();
        assert_eq!(slow.timestamps_s.len(), fast.timestamps_s.len());
        for (a, b) in slow.timestamps_s.iter().zip(&fast.timestamps_s) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
        assert!((slow.total_time_s - 2.0 * fast.total_time_s).abs() < 1e-12);
    }

    #[test]
    fn planar_loop_axes_equal_plane_normal() {
        let (mesh, ring) = disk_mesh(64, 10.0);
        let path = make_tool_path(&ring, &mesh, 2.0, 1.0).unwrap();
        let first = path.poses[0].axis;
        for pose in &path.poses {
            assert!((pose.axis.dot(&Vec3::Z).abs() - 1.0).abs() < 1e-6);
            assert!(pose.axis.dot(&first) > 0.999999);
        }
    }

    #[test]
    fn resampling_respects_step_bound() {
        let (mesh, ring) = disk_mesh(16, 25.0);
        for step in [0.5, 1.0, 3.0] {
            let path = make_tool_path(&ring, &mesh, 2.0, step).unwrap();
            path.check_invariants(step).unwrap();
        }
    }

    #[test]
    fn degenerate_loops_rejected() {
        let (mesh, _) = disk_mesh(16, 25.0);
        assert!(matches!(
            make_tool_path(&[1, 2], &mesh, 2.0, 1.0),
            Err(PlanError::DegenerateLoop)
        ));
        assert!(matches!(
            make_tool_path(&[1, 1, 1], &mesh, 2.0, 1.0),
            Err(PlanError::DegenerateLoop)
        ));
        assert!(matches!(
            make_tool_path(&[1, 2, 3], &mesh, 0.0, 1.0),
            Err(PlanError::NonPositiveSpeed(_))
        ));
    }
}
