//! End-to-end orchestration: generate, render, calibrate, segment, label,
//! plan, evaluate. Every stage writes its artifacts into the run
//! directory; failures carry the stage name and a remediation hint, and
//! partial outputs are kept for debugging.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{
    estimate_rigid_transform, map_cloud_to_image, CameraModel, FrameGraph, Projection,
};
use crate::cloud::{LabeledPointCloud, TissueClass};
use crate::config::{CalibrationMode, ExperimentConfig};
use crate::formats;
use crate::geometry::{Point3, RigidTransform, Vec3};
use crate::img::IntensityImage;
use crate::metrics::{self, Dsc2dReport, MarginErrorReport};
use crate::phantom::{
    generate_phantom, render_depth_cloud, render_depth_image, render_ground_truth_mask,
    render_nir_image, DepthRenderOptions, Scene,
};
use crate::planner::{plan_incision, IncisionPath, PlanDiagnostics};
use crate::seg::{label_cloud, segment_nir, SegParams, SegmentationMask};

pub const WORLD_FRAME: &str = "world";
pub const DEPTH_FRAME: &str = "depth_cam";
pub const NIR_FRAME: &str = "nir_cam";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration invalid: {0}")]
    Validation(String),
    #[error("stage '{stage}' failed: {message} (hint: {hint})")]
    Stage {
        stage: &'static str,
        message: String,
        hint: &'static str,
    },
}

impl PipelineError {
    fn stage(stage: &'static str, hint: &'static str, err: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            message: err.to_string(),
            hint,
        }
    }
}

/// Calibration outcome recorded in the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mode: CalibrationMode,
    /// RMS residual of the estimated depth-to-NIR transform (mm); zero in
    /// exact mode.
    pub rms_mm: f64,
    /// Deviation of the edge actually used from the ground-truth transform.
    pub translation_error_mm: f64,
    pub rotation_error_deg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub healthy_pixels: usize,
    pub tumor_pixels: usize,
    pub background_pixels: usize,
    pub external_mask_used: bool,
    pub dsc_2d: Dsc2dReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionReport {
    pub cloud_points: usize,
    pub tumor_points: usize,
    pub healthy_points: usize,
    pub background_points: usize,
    pub dsc_3d_tumor: f64,
    pub hausdorff_tumor_mm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sbr_measured: f64,
    pub sbr_model: f64,
    pub margin: MarginErrorReport,
}

/// Everything a run produces besides the artifact files themselves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub calibration: CalibrationReport,
    pub segmentation: SegmentationReport,
    pub fusion: FusionReport,
    pub planner: PlanDiagnostics,
    pub metrics: MetricsReport,
    pub artifacts: BTreeMap<String, PathBuf>,
    pub stage_timings_ms: BTreeMap<String, f64>,
    pub config: ExperimentConfig,
}

/// Output-directory guard: refuses to overwrite unless allowed, and
/// records every artifact written.
pub struct ArtifactStore {
    dir: PathBuf,
    overwrite: bool,
    files: BTreeMap<String, PathBuf>,
}

impl ArtifactStore {
    pub fn new(dir: &Path, overwrite: bool) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| {
            PipelineError::stage("io", "check the output directory is writable", e)
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            overwrite,
            files: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Reserves an output path, enforcing the overwrite policy.
    pub fn target(&mut self, key: &str, filename: &str) -> Result<PathBuf, PipelineError> {
        let path = self.dir.join(filename);
        if path.exists() && !self.overwrite {
            return Err(PipelineError::Stage {
                stage: "io",
                message: format!("{} already exists", path.display()),
                hint: "pass --overwrite to replace existing outputs",
            });
        }
        self.files.insert(key.to_string(), path.clone());
        Ok(path)
    }

    pub fn manifest(&self) -> BTreeMap<String, PathBuf> {
        self.files.clone()
    }
}

/// Simulated hand-eye calibration: both sensors observe the same
/// checkerboard corners; rigid alignment of the two observation sets
/// estimates the depth-to-NIR transform.
pub fn calibrate(
    cfg: &ExperimentConfig,
    depth_cam: &CameraModel,
    nir_cam: &CameraModel,
) -> Result<(FrameGraph, CalibrationReport), PipelineError> {
    let truth = nir_cam.pose.compose(&depth_cam.pose.inverse());
    let hint = "check calibration corner count and noise settings";
    let (estimated, rms) = match cfg.calibration.mode {
        CalibrationMode::Exact => (truth, 0.0),
        CalibrationMode::Estimated => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xCA11_B4A7);
            let side = (cfg.calibration.corner_count as f64).sqrt().ceil() as usize;
            let mut pairs = Vec::with_capacity(cfg.calibration.corner_count);
            'grid: for gy in 0..side {
                for gx in 0..side {
                    if pairs.len() >= cfg.calibration.corner_count {
                        break 'grid;
                    }
                    // Checkerboard on the table plane next to the phantom.
                    let p_world = Point3::new(
                        -60.0 + 120.0 * gx as f64 / side.max(2) as f64,
                        -60.0 + 120.0 * gy as f64 / side.max(2) as f64,
                        10.0,
                    );
                    let noise = cfg.calibration.corner_noise_std_mm;
                    let jitter = |rng: &mut ChaCha8Rng| {
                        Vec3::new(
                            noise * gauss(rng),
                            noise * gauss(rng),
                            noise * gauss(rng),
                        )
                    };
                    let in_depth = depth_cam.pose.apply(&p_world) + jitter(&mut rng);
                    let in_nir = nir_cam.pose.apply(&p_world) + jitter(&mut rng);
                    pairs.push((in_depth, in_nir));
                }
            }
            let registration = estimate_rigid_transform(&pairs)
                .map_err(|e| PipelineError::stage("calibrate", hint, e))?;
            (registration.transform, registration.rms)
        }
    };

    // Optional injected calibration error for degradation studies.
    let used = if cfg.calibration.rotation_error_deg != 0.0
        || cfg.calibration.translation_error_mm != 0.0
    {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0E44_0CA1_u64);
        let axis = random_unit(&mut rng);
        let dir = random_unit(&mut rng);
        let rot = RigidTransform::from_axis_angle(
            axis,
            cfg.calibration.rotation_error_deg.to_radians(),
        )
        .expect("unit axis");
        let shift =
            RigidTransform::from_translation(dir.scale(cfg.calibration.translation_error_mm));
        shift.compose(&rot).compose(&estimated)
    } else {
        estimated
    };

    let (dt, dr) = used.deviation_from(&truth);
    let mut graph = FrameGraph::new();
    graph
        .add_edge(DEPTH_FRAME, WORLD_FRAME, depth_cam.pose.inverse())
        .map_err(|e| PipelineError::stage("calibrate", hint, e))?;
    graph
        .add_edge(DEPTH_FRAME, NIR_FRAME, used)
        .map_err(|e| PipelineError::stage("calibrate", hint, e))?;
    for edge in &cfg.calibration.extra_edges {
        let transform = edge
            .build()
            .map_err(|e| PipelineError::stage("calibrate", hint, e))?;
        graph
            .add_edge(&edge.from, &edge.to, transform)
            .map_err(|e| {
                PipelineError::stage("calibrate", "extra edge conflicts with existing paths", e)
            })?;
    }
    Ok((
        graph,
        CalibrationReport {
            mode: cfg.calibration.mode,
            rms_mm: rms,
            translation_error_mm: dt,
            rotation_error_deg: dr.to_degrees(),
        },
    ))
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if let Some(u) = v.normalized() {
            if v.norm() <= 1.0 {
                return u;
            }
        }
    }
}

/// Projections of a depth-frame cloud into NIR pixel space through the
/// frame graph.
pub fn project_cloud_to_nir(
    cloud: &LabeledPointCloud,
    graph: &FrameGraph,
    nir_cam: &CameraModel,
) -> Result<Vec<Projection>, PipelineError> {
    let intrinsics_only = CameraModel {
        pose: RigidTransform::identity(),
        ..nir_cam.clone()
    };
    map_cloud_to_image(cloud, graph, NIR_FRAME, &intrinsics_only).map_err(|e| {
        PipelineError::stage(
            "label",
            "frame graph must connect the cloud frame to the NIR camera",
            e,
        )
    })
}

/// The full pipeline on one config. Artifacts land in `out_dir`.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    overwrite: bool,
) -> Result<RunReport, PipelineError> {
    cfg.validate()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let mut store = ArtifactStore::new(out_dir, overwrite)?;
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut clock = StageClock::new(&mut timings);

    // Generate.
    clock.start("generate");
    let scene = generate_phantom(&cfg.phantom).map_err(|e| {
        PipelineError::stage("generate", "check the phantom geometry fields", e)
    })?;
    let cfg_path = store.target("config", "config.toml")?;
    cfg.save(&cfg_path)
        .map_err(|e| PipelineError::stage("generate", "output directory not writable", e))?;
    formats::write_mesh_ply(
        &store.target("kidney_mesh", "kidney.ply")?,
        &scene.kidney,
        &scene.kidney_classes,
    )
    .map_err(|e| PipelineError::stage("generate", "output directory not writable", e))?;
    formats::write_mesh_ply(
        &store.target("tumor_mesh", "tumor.ply")?,
        &scene.tumor,
        &scene.tumor_classes,
    )
    .map_err(|e| PipelineError::stage("generate", "output directory not writable", e))?;
    clock.stop();

    // Render.
    clock.start("render");
    let depth_cam = cfg
        .cameras
        .depth
        .build()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let nir_cam = cfg
        .cameras
        .nir
        .build()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let render_hint = "check camera pose and fov keep the scene in view";
    let cloud_world = render_depth_cloud(
        &scene,
        &depth_cam,
        (depth_cam.width, depth_cam.height),
        &DepthRenderOptions {
            depth_noise_std_mm: cfg.cameras.depth.depth_noise_std_mm,
            seed: cfg.seed,
        },
    )
    .map_err(|e| PipelineError::stage("render", render_hint, e))?;
    let nir_image = render_nir_image(
        &scene,
        &nir_cam,
        &cfg.dye,
        (nir_cam.width, nir_cam.height),
        cfg.seed,
    )
    .map_err(|e| PipelineError::stage("render", render_hint, e))?;
    let gt_mask = render_ground_truth_mask(&scene, &nir_cam, (nir_cam.width, nir_cam.height))
        .map_err(|e| PipelineError::stage("render", render_hint, e))?;
    let depth_image = render_depth_image(&scene, &depth_cam, (depth_cam.width, depth_cam.height))
        .map_err(|e| PipelineError::stage("render", render_hint, e))?;

    let io_hint = "output directory not writable";
    formats::write_labeled_cloud_ply(&store.target("cloud", "cloud_truth.ply")?, &cloud_world)
        .map_err(|e| PipelineError::stage("render", io_hint, e))?;
    formats::write_image_pgm(&store.target("nir_pgm", "nir.pgm")?, &nir_image)
        .map_err(|e| PipelineError::stage("render", io_hint, e))?;
    formats::write_image_png(&store.target("nir_png", "nir.png")?, &nir_image)
        .map_err(|e| PipelineError::stage("render", io_hint, e))?;
    formats::write_image_pgm(&store.target("depth_pgm", "depth.pgm")?, &depth_image)
        .map_err(|e| PipelineError::stage("render", io_hint, e))?;
    formats::write_mask_pgm(&store.target("gt_mask", "gt_mask.pgm")?, &gt_mask)
        .map_err(|e| PipelineError::stage("render", io_hint, e))?;
    clock.stop();

    // Calibrate.
    clock.start("calibrate");
    let (graph, calibration_report) = calibrate(cfg, &depth_cam, &nir_cam)?;
    clock.stop();

    // Segment.
    clock.start("segment");
    let (mask, external_mask_used) = match &cfg.segmentation.external_mask {
        Some(path) => {
            let mask = formats::read_mask_pgm(path).map_err(|e| {
                PipelineError::stage("segment", "external mask must be a PGM with classes 0/1/2", e)
            })?;
            if mask.width() != nir_image.width() || mask.height() != nir_image.height() {
                return Err(PipelineError::Stage {
                    stage: "segment",
                    message: format!(
                        "external mask is {}x{} but the NIR image is {}x{}",
                        mask.width(),
                        mask.height(),
                        nir_image.width(),
                        nir_image.height()
                    ),
                    hint: "regenerate the mask at the NIR camera resolution",
                });
            }
            (mask, true)
        }
        None => {
            let params = SegParams {
                healthy_threshold: cfg.segmentation.healthy_threshold,
            };
            let mask = segment_nir(&nir_image, &params).map_err(|e| {
                PipelineError::stage(
                    "segment",
                    "check dye contrast, or supply an external mask",
                    e,
                )
            })?;
            (mask, false)
        }
    };
    formats::write_mask_pgm(&store.target("mask", "mask.pgm")?, &mask)
        .map_err(|e| PipelineError::stage("segment", io_hint, e))?;
    let dsc2d = metrics::dsc_2d(&mask, &gt_mask)
        .map_err(|e| PipelineError::stage("segment", "mask/image dimensions diverged", e))?;
    let segmentation_report = SegmentationReport {
        healthy_pixels: mask.count(TissueClass::Healthy),
        tumor_pixels: mask.count(TissueClass::Tumor),
        background_pixels: mask.count(TissueClass::Background),
        external_mask_used,
        dsc_2d: dsc2d,
    };
    clock.stop();

    // Label.
    clock.start("label");
    let projections = project_cloud_to_nir(&cloud_world, &graph, &nir_cam)?;
    let mut labeled = label_cloud(&cloud_world, &projections, &mask)
        .map_err(|e| PipelineError::stage("label", "projections misaligned with cloud", e))?;
    let truth_tumor_cloud: Vec<Point3> = labeled.ground_truth_points(TissueClass::Tumor);
    let predicted_tumor: Vec<Point3> = labeled.points_with_label(TissueClass::Tumor);
    let dsc3d = metrics::dsc_3d(
        &predicted_tumor,
        &truth_tumor_cloud,
        cfg.evaluation.dsc3d_threshold_mm,
    )
    .map_err(|e| PipelineError::stage("label", "3D Dice inputs degenerate", e))?;
    let hausdorff_tumor = if predicted_tumor.is_empty() || truth_tumor_cloud.is_empty() {
        f64::NAN
    } else {
        metrics::hausdorff(&predicted_tumor, &truth_tumor_cloud)
            .map_err(|e| PipelineError::stage("label", "hausdorff inputs degenerate", e))?
    };
    let fusion_report = FusionReport {
        cloud_points: labeled.len(),
        tumor_points: predicted_tumor.len(),
        healthy_points: labeled.indices_with_label(TissueClass::Healthy).len(),
        background_points: labeled.indices_with_label(TissueClass::Background).len(),
        dsc_3d_tumor: dsc3d,
        hausdorff_tumor_mm: hausdorff_tumor,
    };
    clock.stop();

    // Plan.
    clock.start("plan");
    let (path, surface, plan_diag) = plan_incision(&mut labeled, &cfg.planner).map_err(|e| {
        PipelineError::stage(
            "plan",
            "margin may touch the visible edge; adjust the camera or margin",
            e,
        )
    })?;
    formats::write_labeled_cloud_ply(&store.target("labeled_cloud", "labeled.ply")?, &labeled)
        .map_err(|e| PipelineError::stage("plan", io_hint, e))?;
    formats::write_mesh_ply(
        &store.target("surface", "surface.ply")?,
        &surface,
        labeled.labels(),
    )
    .map_err(|e| PipelineError::stage("plan", io_hint, e))?;
    formats::write_path_csv(&store.target("path_csv", "path.csv")?, &path)
        .map_err(|e| PipelineError::stage("plan", io_hint, e))?;
    let path_json = PathJson {
        margin_mm: cfg.planner.margin_mm,
        speed_mm_s: cfg.planner.speed_mm_s,
        perimeter_mm: path.perimeter_mm,
        total_time_s: path.total_time_s,
        loop_count: plan_diag.loop_count,
        path: path.clone(),
    };
    write_json(&store.target("path_json", "path.json")?, &path_json)
        .map_err(|e| PipelineError::stage("plan", io_hint, e))?;
    clock.stop();

    // Evaluate.
    clock.start("evaluate");
    let healthy_region = gt_mask.pixels_of(TissueClass::Healthy);
    let background_region = gt_mask.pixels_of(TissueClass::Background);
    let sbr_measured = metrics::sbr(&nir_image, &healthy_region, &background_region)
        .map_err(|e| PipelineError::stage("evaluate", "NIR image lacks a usable background", e))?;
    let truth_tumor_scene = scene.ground_truth_tumor_points();
    let margin_report = metrics::margin_error(
        &path.positions(),
        &truth_tumor_scene,
        cfg.planner.margin_mm,
        cfg.evaluation.tool_offset_mm,
    )
    .map_err(|e| PipelineError::stage("evaluate", "planned path or tumor set empty", e))?;
    let metrics_report = MetricsReport {
        sbr_measured,
        sbr_model: cfg.dye.model_sbr(cfg.phantom.dye_concentration),
        margin: margin_report,
    };
    clock.stop();

    let report_path = store.target("report", "report.json")?;
    let report = RunReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        calibration: calibration_report,
        segmentation: segmentation_report,
        fusion: fusion_report,
        planner: plan_diag,
        metrics: metrics_report,
        artifacts: store.manifest(),
        stage_timings_ms: timings,
        config: cfg.clone(),
    };
    write_json(&report_path, &report)
        .map_err(|e| PipelineError::stage("evaluate", io_hint, e))?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathJson {
    pub margin_mm: f64,
    pub speed_mm_s: f64,
    pub perimeter_mm: f64,
    pub total_time_s: f64,
    pub loop_count: usize,
    pub path: IncisionPath,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    use std::io::Write;
    writeln!(writer)?;
    writer.flush()
}

struct StageClock<'a> {
    timings: &'a mut BTreeMap<String, f64>,
    current: Option<(String, Instant)>,
}

impl<'a> StageClock<'a> {
    fn new(timings: &'a mut BTreeMap<String, f64>) -> Self {
        Self {
            timings,
            current: None,
        }
    }

    fn start(&mut self, stage: &str) {
        self.stop();
        self.current = Some((stage.to_string(), Instant::now()));
    }

    fn stop(&mut self) {
        if let Some((stage, started)) = self.current.take() {
            self.timings
                .insert(stage, started.elapsed().as_secs_f64() * 1000.0);
        }
    }
}

/// One row of the batch summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRow {
    pub run: String,
    pub hausdorff_mm: f64,
    pub dsc_2d: f64,
    pub dsc_3d: f64,
    pub mean_abs_eps_mm: f64,
    pub time_estimate_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub rows: Vec<BatchRow>,
    pub failures: Vec<(String, String)>,
}

/// Runs each config into its own subdirectory of `out_root` and writes a
/// summary table plus per-run per-point margin errors. Failures are
/// recorded and the batch continues.
pub fn run_batch(
    configs: &[(String, ExperimentConfig)],
    out_root: &Path,
    overwrite: bool,
) -> Result<BatchOutcome, PipelineError> {
    if configs.is_empty() {
        return Err(PipelineError::Validation(
            "batch requires at least one config".into(),
        ));
    }
    std::fs::create_dir_all(out_root)
        .map_err(|e| PipelineError::stage("io", "output root not writable", e))?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (run_name, cfg) in configs {
        let run_dir = out_root.join(run_name);
        match run_pipeline(cfg, &run_dir, overwrite) {
            Ok(report) => {
                let eps_path = run_dir.join("epsilon.csv");
                if let Err(e) = write_epsilons(&eps_path, &report.metrics.margin) {
                    failures.push((run_name.clone(), e.to_string()));
                    continue;
                }
                rows.push(BatchRow {
                    run: run_name.clone(),
                    hausdorff_mm: report.fusion.hausdorff_tumor_mm,
                    dsc_2d: report.segmentation.dsc_2d.weighted_mean,
                    dsc_3d: report.fusion.dsc_3d_tumor,
                    mean_abs_eps_mm: report.metrics.margin.mean_abs,
                    time_estimate_s: report.planner.total_time_s,
                });
            }
            Err(e) => failures.push((run_name.clone(), e.to_string())),
        }
    }
    let summary_path = out_root.join("summary.csv");
    write_summary(&summary_path, &rows)
        .map_err(|e| PipelineError::stage("io", "cannot write batch summary", e))?;
    Ok(BatchOutcome { rows, failures })
}

fn write_summary(path: &Path, rows: &[BatchRow]) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "run,hausdorff_mm,dsc_2d,dsc_3d,mean_abs_eps_mm,time_estimate_s")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.run, r.hausdorff_mm, r.dsc_2d, r.dsc_3d, r.mean_abs_eps_mm, r.time_estimate_s
        )?;
    }
    w.flush()
}

fn write_epsilons(path: &Path, report: &MarginErrorReport) -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,eps_mm")?;
    for (i, e) in report.errors.iter().enumerate() {
        writeln!(w, "{},{}", i, e)?;
    }
    w.flush()
}

/// Rebuilds a `Scene` from exported mesh files plus the config (for
/// stage-wise CLI runs that start from files).
pub fn scene_from_files(
    kidney_path: &Path,
    tumor_path: &Path,
    cfg: &ExperimentConfig,
) -> Result<Scene, PipelineError> {
    let hint = "run the generate stage first";
    let kidney = formats::read_mesh_ply(kidney_path)
        .map_err(|e| PipelineError::stage("render", hint, e))?;
    let tumor = formats::read_mesh_ply(tumor_path)
        .map_err(|e| PipelineError::stage("render", hint, e))?;
    // Reconstruct the tumor sphere parameters from its mesh.
    let mut centroid = Vec3::ZERO;
    for v in tumor.mesh.vertices() {
        centroid = centroid + v.to_vec();
    }
    centroid = centroid.scale(1.0 / tumor.mesh.vertices().len().max(1) as f64);
    let center = centroid.to_point();
    let radius = tumor
        .mesh
        .vertices()
        .iter()
        .map(|v| v.distance(&center))
        .fold(0.0, f64::max);
    Ok(Scene {
        kidney: kidney.mesh,
        tumor: tumor.mesh,
        kidney_classes: kidney.classes,
        tumor_classes: tumor.classes,
        dye_concentration: cfg.phantom.dye_concentration,
        tumor_center: center,
        tumor_radius: radius,
    })
}

/// Output of the perception half of the pipeline (through labeling),
/// without planning. Used by tests that study fusion quality in isolation.
pub struct FusionRun {
    pub scene: Scene,
    pub nir_image: IntensityImage,
    pub gt_mask: SegmentationMask,
    pub mask: SegmentationMask,
    pub labeled: LabeledPointCloud,
    pub dsc_2d: Dsc2dReport,
    pub dsc_3d_tumor: f64,
}

/// Generate, render, calibrate, segment, and label in memory.
pub fn run_fusion(cfg: &ExperimentConfig) -> Result<FusionRun, PipelineError> {
    cfg.validate()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let scene = generate_phantom(&cfg.phantom)
        .map_err(|e| PipelineError::stage("generate", "phantom fields", e))?;
    let depth_cam = cfg
        .cameras
        .depth
        .build()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let nir_cam = cfg
        .cameras
        .nir
        .build()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    let cloud_world = render_depth_cloud(
        &scene,
        &depth_cam,
        (depth_cam.width, depth_cam.height),
        &DepthRenderOptions {
            depth_noise_std_mm: cfg.cameras.depth.depth_noise_std_mm,
            seed: cfg.seed,
        },
    )
    .map_err(|e| PipelineError::stage("render", "camera framing", e))?;
    let nir_image = render_nir_image(
        &scene,
        &nir_cam,
        &cfg.dye,
        (nir_cam.width, nir_cam.height),
        cfg.seed,
    )
    .map_err(|e| PipelineError::stage("render", "camera framing", e))?;
    let gt_mask = render_ground_truth_mask(&scene, &nir_cam, (nir_cam.width, nir_cam.height))
        .map_err(|e| PipelineError::stage("render", "camera framing", e))?;
    let (graph, _) = calibrate(cfg, &depth_cam, &nir_cam)?;
    let mask = segment_nir(
        &nir_image,
        &SegParams {
            healthy_threshold: cfg.segmentation.healthy_threshold,
        },
    )
    .map_err(|e| PipelineError::stage("segment", "dye contrast", e))?;
    let projections = project_cloud_to_nir(&cloud_world, &graph, &nir_cam)?;
    let labeled = label_cloud(&cloud_world, &projections, &mask)
        .map_err(|e| PipelineError::stage("label", "alignment", e))?;
    let dsc_2d = metrics::dsc_2d(&mask, &gt_mask)
        .map_err(|e| PipelineError::stage("label", "dims", e))?;
    let dsc_3d_tumor = metrics::dsc_3d(
        &labeled.points_with_label(TissueClass::Tumor),
        &labeled.ground_truth_points(TissueClass::Tumor),
        cfg.evaluation.dsc3d_threshold_mm,
    )
    .map_err(|e| PipelineError::stage("label", "threshold", e))?;
    Ok(FusionRun {
        scene,
        nir_image,
        gt_mask,
        mask,
        labeled,
        dsc_2d,
        dsc_3d_tumor,
    })
}

/// Convenience for tests and the acceptance suite: runs the in-memory
/// pipeline (no file IO) and returns the labeled cloud, path, report
/// pieces.
pub struct MemoryRun {
    pub scene: Scene,
    pub nir_image: IntensityImage,
    pub gt_mask: SegmentationMask,
    pub mask: SegmentationMask,
    pub labeled: LabeledPointCloud,
    pub path: IncisionPath,
    pub diagnostics: PlanDiagnostics,
    pub dsc_2d: Dsc2dReport,
    pub dsc_3d_tumor: f64,
}

pub fn run_in_memory(cfg: &ExperimentConfig) -> Result<MemoryRun, PipelineError> {
    let fusion = run_fusion(cfg)?;
    let FusionRun {
        scene,
        nir_image,
        gt_mask,
        mask,
        mut labeled,
        dsc_2d,
        dsc_3d_tumor,
    } = fusion;
    let (path, _surface, diagnostics) = plan_incision(&mut labeled, &cfg.planner)
        .map_err(|e| PipelineError::stage("plan", "margin visibility", e))?;
    Ok(MemoryRun {
        scene,
        nir_image,
        gt_mask,
        mask,
        labeled,
        path,
        diagnostics,
        dsc_2d,
        dsc_3d_tumor,
    })
}

