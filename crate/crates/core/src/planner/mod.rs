//! Incision planning: label the surgical margin inside the cloud, rebuild
//! the observed surface with ball pivoting, walk the outer edge of the
//! margin into a closed loop, and time a tool path along it.

mod bpa;
mod loops;
mod margin;
mod toolpath;

pub use bpa::{reconstruct_surface, suggested_ball_radius};
pub use loops::{extract_incision_loop, IncisionLoop};
pub use margin::find_margin;
pub use toolpath::{make_tool_path, IncisionPath, ToolPose};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::LabeledPointCloud;
use crate::geometry::TriangleMesh;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cloud contains no tumor-labeled points")]
    NoTumorPoints,
    #[error("cloud contains no healthy-labeled points")]
    NoHealthyPoints,
    #[error("margin distance must be positive, got {0}")]
    NonPositiveMargin(f64),
    #[error("pivot-ball radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("surface reconstruction needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error(
        "ball pivoting found no seed triangle at radius {radius} mm; \
         suggested radius from sampling density: {suggested} mm"
    )]
    ReconstructionFailed { radius: f64, suggested: f64 },
    #[error("margin band touches the cloud's visible edge; the incision loop cannot close")]
    MarginAtCloudBoundary,
    #[error("incision boundary is fragmented into open chains of sizes {0:?}")]
    FragmentedBoundary(Vec<usize>),
    #[error("incision loop has (near-)zero perimeter")]
    DegenerateLoop,
    #[error("tool speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("max step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("mesh has {mesh} vertices but cloud has {cloud} points; labels cannot align")]
    MeshCloudMismatch { mesh: usize, cloud: usize },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Indices of cloud points labeled as surgical margin, plus the distance
/// that defined them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginSet {
    pub indices: Vec<usize>,
    pub margin_mm: f64,
}

/// Diagnostics emitted by the end-to-end planner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub margin_point_count: usize,
    pub ball_radius_mm: f64,
    pub triangle_count: usize,
    pub boundary_edge_count: usize,
    pub loop_count: usize,
    pub loop_vertex_count: usize,
    pub other_loop_sizes: Vec<usize>,
    pub perimeter_mm: f64,
    pub total_time_s: f64,
}

/// Planner knobs; `ball_radius_mm = None` derives the radius from the
/// cloud's median neighbor spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub margin_mm: f64,
    pub speed_mm_s: f64,
    pub max_step_mm: f64,
    pub ball_radius_mm: Option<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            margin_mm: 5.0,
            speed_mm_s: 2.0,
            max_step_mm: 1.0,
            ball_radius_mm: None,
        }
    }
}

/// Full planning chain on a labeled cloud. Mutates the cloud's labels
/// (margin points get the margin class) and returns the path, the
/// reconstructed surface, and diagnostics.
pub fn plan_incision(
    cloud: &mut LabeledPointCloud,
    config: &PlannerConfig,
) -> Result<(IncisionPath, TriangleMesh, PlanDiagnostics), PlanError> {
    let margin_set = find_margin(cloud, config.margin_mm)?;
    let radius = match config.ball_radius_mm {
        Some(r) => r,
        None => suggested_ball_radius(cloud.points()).ok_or(PlanError::TooFewPoints(cloud.len()))?,
    };
    let mesh = reconstruct_surface(cloud.points(), radius)?;
    let incision = extract_incision_loop(&mesh, cloud.labels(), &margin_set)?;
    let path = make_tool_path(
        &incision.vertices,
        &mesh,
        config.speed_mm_s,
        config.max_step_mm,
    )?;
    let diagnostics = PlanDiagnostics {
        margin_point_count: margin_set.indices.len(),
        ball_radius_mm: radius,
        triangle_count: mesh.triangles().len(),
        boundary_edge_count: mesh.boundary_edges().len(),
        loop_count: 1 + incision.other_loops.len(),
        loop_vertex_count: incision.vertices.len(),
        other_loop_sizes: incision.other_loops.iter().map(Vec::len).collect(),
        perimeter_mm: path.perimeter_mm,
        total_time_s: path.total_time_s,
    };
    Ok((path, mesh, diagnostics))
}
