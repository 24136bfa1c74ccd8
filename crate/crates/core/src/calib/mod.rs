//! Camera models and the rigid-frame graph linking the NIR camera, the
//! depth camera, and the world frame. Frame transforms are either supplied
//! directly or estimated from point correspondences (a shared checkerboard
//! observed by both sensors reduces to rigid point-set alignment).

mod register;

pub use register::{estimate_rigid_transform, Registration};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::LabeledPointCloud;
use crate::geometry::{Point3, RigidTransform};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("focal lengths must be positive, got fx={0}, fy={1}")]
    NonPositiveFocal(f64, f64),
    #[error("principal point ({0}, {1}) lies outside the {2}x{3} image")]
    PrincipalPointOutside(f64, f64, u32, u32),
    #[error("need at least 3 non-collinear correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("correspondence set is degenerate (collinear or coincident points)")]
    DegenerateConfiguration,
    #[error("frames {0} and {1} are not connected in the frame graph")]
    DisconnectedFrames(String, String),
    #[error("unknown frame {0}")]
    UnknownFrame(String),
    #[error(
        "edge {from}->{to} is inconsistent with the existing path \
         (translation deviation {dt:.3e} mm, rotation deviation {dr:.3e} rad)"
    )]
    InconsistentEdge {
        from: String,
        to: String,
        dt: f64,
        dr: f64,
    },
    #[error("projection list length {projections} does not match cloud size {points}")]
    ProjectionCountMismatch { projections: usize, points: usize },
}

/// Cycle-consistency tolerances for the frame graph.
pub const CYCLE_TRANSLATION_TOL_MM: f64 = 1e-6;
pub const CYCLE_ROTATION_TOL_RAD: f64 = 1e-8;

/// Pinhole camera: intrinsics plus a camera-from-world pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Maps world-frame points into the camera frame.
    pub pose: RigidTransform,
}

/// Result of projecting one 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates inside the image, plus camera-frame depth.
    InImage { u: f64, v: f64, depth: f64 },
    /// Projects onto the image plane but outside the pixel bounds.
    OutOfBounds { u: f64, v: f64, depth: f64 },
    /// Non-positive camera-frame depth; no pixel exists.
    BehindCamera,
}

impl Projection {
    pub fn pixel(&self) -> Option<(f64, f64)> {
        match *self {
            Projection::InImage { u, v, .. } | Projection::OutOfBounds { u, v, .. } => {
                Some((u, v))
            }
            Projection::BehindCamera => None,
        }
    }

    pub fn in_image(&self) -> bool {
        matches!(self, Projection::InImage { .. })
    }
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
    ) -> Result<Self, CalibError> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CalibError::NonPositiveFocal(fx, fy));
        }
        if cx < 0.0 || cx >= width as f64 || cy < 0.0 || cy >= height as f64 {
            return Err(CalibError::PrincipalPointOutside(cx, cy, width, height));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Camera with square pixels sized from a vertical field of view, with
    /// the principal point at the image center.
    pub fn from_vertical_fov(
        fov_rad: f64,
        width: u32,
        height: u32,
        pose: RigidTransform,
    ) -> Result<Self, CalibError> {
        let fy = (height as f64 / 2.0) / (fov_rad / 2.0).tan();
        Self::new(
            fy,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            pose,
        )
    }

    /// Projects a world-frame point through the pose and intrinsics.
    pub fn project(&self, p_world: &Point3) -> Projection {
        self.project_camera_frame(&self.pose.apply(p_world))
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera_frame(&self, p_cam: &Point3) -> Projection {
        if p_cam.z <= 0.0 {
            return Projection::BehindCamera;
        }
        let u = self.fx * p_cam.x / p_cam.z + self.cx;
        let v = self.fy * p_cam.y / p_cam.z + self.cy;
        if u >= 0.0 && u < self.width as f64 && v >= 0.0 && v < self.height as f64 {
            Projection::InImage { u, v, depth: p_cam.z }
        } else {
            Projection::OutOfBounds { u, v, depth: p_cam.z }
        }
    }

    /// Camera-frame point on the ray through pixel `(u, v)` at the given
    /// depth. Inverse of `project_camera_frame` for positive depths.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Point3 {
        Point3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Unit ray direction through pixel `(u, v)` in the camera frame.
    pub fn pixel_ray(&self, u: f64, v: f64) -> crate::geometry::Vec3 {
        crate::geometry::Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
            .normalized()
            .expect("pixel ray is never zero")
    }
}

/// Named coordinate frames with rigid transforms on the edges. Redundant
/// edges must agree with the existing path within the cycle tolerances or
/// insertion is rejected.
#[derive(Debug, Clone, Default)]
pub struct FrameGraph {
    edges: HashMap<String, Vec<(String, RigidTransform)>>,
}

impl FrameGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a bidirectional edge carrying `to_from_from` (maps points in
    /// `from` coordinates into `to` coordinates).
    pub fn add_edge(
        &mut self,
        from: &str,
        to: &str,
        transform: RigidTransform,
    ) -> Result<(), CalibError> {
        if let Ok(existing) = self.resolve(from, to) {
            let (dt, dr) = transform.deviation_from(&existing);
            if dt > CYCLE_TRANSLATION_TOL_MM || dr > CYCLE_ROTATION_TOL_RAD {
                return Err(CalibError::InconsistentEdge {
                    from: from.to_string(),
                    to: to.to_string(),
                    dt,
                    dr,
                });
            }
        }
        self.edges
            .entry(from.to_string())
            .or_default()
            .push((to.to_string(), transform));
        self.edges
            .entry(to.to_string())
            .or_default()
            .push((from.to_string(), transform.inverse()));
        Ok(())
    }

    pub fn contains(&self, frame: &str) -> bool {
        self.edges.contains_key(frame)
    }

    /// Transform mapping `from`-frame points into the `to` frame, composed
    /// along a breadth-first path.
    pub fn resolve(&self, from: &str, to: &str) -> Result<RigidTransform, CalibError> {
        if !self.edges.contains_key(from) {
            return Err(CalibError::UnknownFrame(from.to_string()));
        }
        if from == to {
            return Ok(RigidTransform::identity());
        }
        if !self.edges.contains_key(to) {
            return Err(CalibError::UnknownFrame(to.to_string()));
        }
        let mut queue = std::collections::VecDeque::new();
        let mut seen = std::collections::HashSet::new();
        queue.push_back((from.to_string(), RigidTransform::identity()));
        seen.insert(from.to_string());
        while let Some((frame, acc)) = queue.pop_front() {
            for (next, edge) in self.edges.get(&frame).into_iter().flatten() {
                if seen.contains(next) {
                    continue;
                }
                // acc maps `from` into `frame`; edge maps `frame` into `next`.
                let acc_next = edge.compose(&acc);
                if next == to {
                    return Ok(acc_next);
                }
                seen.insert(next.clone());
                queue.push_back((next.clone(), acc_next));
            }
        }
        Err(CalibError::DisconnectedFrames(
            from.to_string(),
            to.to_string(),
        ))
    }
}

/// Camera-from-world pose for a camera at `eye` looking at `target`.
/// Convention: +z forward, +x right, +y down in the image. `up_hint`
/// breaks the roll ambiguity; a hint parallel to the view direction falls
/// back to another axis.
pub fn look_at_pose(eye: &Point3, target: &Point3, up_hint: &crate::geometry::Vec3) -> RigidTransform {
    use crate::geometry::Vec3;
    let forward = (*target - *eye).normalized().expect("eye != target");
    let mut hint = *up_hint;
    if forward.cross(&hint).norm() < 1e-9 {
        hint = if forward.cross(&Vec3::X).norm() > 1e-9 {
            Vec3::X
        } else {
            Vec3::Y
        };
    }
    let right = hint.cross(&forward).normalized().expect("non-parallel hint");
    let down = forward.cross(&right);
    let rotation = [
        [right.x, right.y, right.z],
        [down.x, down.y, down.z],
        [forward.x, forward.y, forward.z],
    ];
    let r = RigidTransform::new(rotation, crate::geometry::Vec3::ZERO)
        .expect("orthonormal by construction");
    let t = -r.apply(eye).to_vec();
    RigidTransform::new(rotation, t).expect("orthonormal by construction")
}

/// Transforms every cloud point into the world frame through the graph and
/// projects it with the camera. Behind-camera and out-of-bounds points are
/// flagged, not dropped; labeling decides their fate.
pub fn map_cloud_to_image(
    cloud: &LabeledPointCloud,
    graph: &FrameGraph,
    world_frame: &str,
    cam: &CameraModel,
) -> Result<Vec<Projection>, CalibError> {
    let to_world = graph.resolve(&cloud.frame, world_frame)?;
    Ok(cloud
        .points()
        .iter()
        .map(|p| cam.project(&to_world.apply(p)))
        .collect())
}
