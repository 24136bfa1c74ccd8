//! Command-line front end: each pipeline stage runs standalone on files,
//! `run` chains them in memory, and `batch` sweeps a list of configs into
//! a summary table.
//!
//! Exit codes: 0 success, 1 validation error, 2 pipeline error, 3 partial
//! batch failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fluoroplan::cloud::TissueClass;
use fluoroplan::config::ExperimentConfig;
use fluoroplan::formats;
use fluoroplan::metrics;
use fluoroplan::phantom::{
    generate_phantom, render_depth_cloud, render_depth_image, render_ground_truth_mask,
    render_nir_image, DepthRenderOptions,
};
use fluoroplan::pipeline::{
    calibrate, project_cloud_to_nir, run_batch, run_pipeline, scene_from_files, ArtifactStore,
    PipelineError,
};
use fluoroplan::planner::plan_incision;
use fluoroplan::seg::{label_cloud, segment_nir, SegParams};

#[derive(Parser)]
#[command(
    name = "fluoroplan",
    about = "Fluorescence-guided tumor margin delineation and incision planning on synthetic kidney scenes",
    version
)]
struct Cli {
    /// Log level (error, warn, info, debug, trace). FLUOROPLAN_LOG overrides.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. FLUOROPLAN_OUT overrides the default.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the surgical margin (mm).
    #[arg(long)]
    margin: Option<f64>,
    /// Override the tool speed (mm/s).
    #[arg(long)]
    speed: Option<f64>,
    /// External segmentation mask (PGM, classes 0/1/2).
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic kidney/tumor scene meshes.
    Generate(CommonArgs),
    /// Render the depth cloud and NIR image from scene meshes.
    Render(CommonArgs),
    /// Segment the NIR image into background/healthy/tumor.
    Segment(CommonArgs),
    /// Label the cloud through calibration and plan the incision path.
    Plan(CommonArgs),
    /// Compute the evaluation metrics from stage outputs.
    Evaluate(CommonArgs),
    /// Run the full pipeline.
    Run(CommonArgs),
    /// Run several configs and write a summary table.
    Batch {
        #[command(flatten)]
        common: CommonArgs,
        /// Config files, one run each.
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = std::env::var("FLUOROPLAN_LOG").unwrap_or_else(|_| cli.log_level.clone());
    env_logger::Builder::new()
        .parse_filters(&level)
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Generate(a) => stage_generate(a),
        Command::Render(a) => stage_render(a),
        Command::Segment(a) => stage_segment(a),
        Command::Plan(a) => stage_plan(a),
        Command::Evaluate(a) => stage_evaluate(a),
        Command::Run(a) => cmd_run(a),
        Command::Batch { common, configs } => return cmd_batch(common, configs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Validation(_) => ExitCode::from(1),
                PipelineError::Stage { .. } => ExitCode::from(2),
            }
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &args.config {
        Some(path) => {
            ExperimentConfig::load(path).map_err(|e| PipelineError::Validation(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.phantom.seed = seed;
    }
    if let Some(margin) = args.margin {
        cfg.planner.margin_mm = margin;
    }
    if let Some(speed) = args.speed {
        cfg.planner.speed_mm_s = speed;
    }
    if let Some(mask) = &args.mask {
        cfg.segmentation.external_mask = Some(mask.clone());
    }
    cfg.validate()
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    if let Some(dir) = &args.out {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var("FLUOROPLAN_OUT") {
        return PathBuf::from(dir);
    }
    PathBuf::from("out")
}

fn io_stage(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Stage {
        stage: "io",
        message: e.to_string(),
        hint: "check paths and permissions",
    }
}

fn stage_generate(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let mut store = ArtifactStore::new(&dir, args.overwrite)?;
    let scene = generate_phantom(&cfg.phantom).map_err(|e| PipelineError::Stage {
        stage: "generate",
        message: e.to_string(),
        hint: "check the phantom geometry fields",
    })?;
    cfg.save(&store.target("config", "config.toml")?)
        .map_err(io_stage)?;
    formats::write_mesh_ply(
        &store.target("kidney", "kidney.ply")?,
        &scene.kidney,
        &scene.kidney_classes,
    )
    .map_err(io_stage)?;
    formats::write_mesh_ply(
        &store.target("tumor", "tumor.ply")?,
        &scene.tumor,
        &scene.tumor_classes,
    )
    .map_err(io_stage)?;
    println!(
        "generated scene: {} kidney vertices, {} tumor vertices -> {}",
        scene.kidney.vertices().len(),
        scene.tumor.vertices().len(),
        dir.display()
    );
    Ok(())
}

fn stage_render(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let scene = scene_from_files(&dir.join("kidney.ply"), &dir.join("tumor.ply"), &cfg)?;
    let mut store = ArtifactStore::new(&dir, args.overwrite)?;
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
    let hint = "check camera pose and fov keep the scene in view";
    let as_stage = |e: fluoroplan::phantom::PhantomError| PipelineError::Stage {
        stage: "render",
        message: e.to_string(),
        hint,
    };
    let cloud = render_depth_cloud(
        &scene,
        &depth_cam,
        (depth_cam.width, depth_cam.height),
        &DepthRenderOptions {
            depth_noise_std_mm: 0.0,
            seed: cfg.seed,
        },
    )
    .map_err(as_stage)?;
    let nir = render_nir_image(
        &scene,
        &nir_cam,
        &cfg.dye,
        (nir_cam.width, nir_cam.height),
        cfg.seed,
    )
    .map_err(as_stage)?;
    let gt_mask = render_ground_truth_mask(&scene, &nir_cam, (nir_cam.width, nir_cam.height))
        .map_err(as_stage)?;
    let depth_img = render_depth_image(&scene, &depth_cam, (depth_cam.width, depth_cam.height))
        .map_err(as_stage)?;
    formats::write_labeled_cloud_ply(&store.target("cloud", "cloud_truth.ply")?, &cloud)
        .map_err(io_stage)?;
    formats::write_image_pgm(&store.target("nir_pgm", "nir.pgm")?, &nir).map_err(io_stage)?;
    formats::write_image_png(&store.target("nir_png", "nir.png")?, &nir).map_err(io_stage)?;
    formats::write_image_pgm(&store.target("depth", "depth.pgm")?, &depth_img)
        .map_err(io_stage)?;
    formats::write_mask_pgm(&store.target("gt_mask", "gt_mask.pgm")?, &gt_mask)
        .map_err(io_stage)?;
    println!("rendered {} cloud points -> {}", cloud.len(), dir.display());
    Ok(())
}

fn stage_segment(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let mut store = ArtifactStore::new(&dir, args.overwrite)?;
    let mask = match &cfg.segmentation.external_mask {
        Some(path) => formats::read_mask_pgm(path).map_err(|e| PipelineError::Stage {
            stage: "segment",
            message: e.to_string(),
            hint: "external mask must be a PGM with classes 0/1/2",
        })?,
        None => {
            let nir = formats::read_image_pgm(&dir.join("nir.pgm")).map_err(|e| {
                PipelineError::Stage {
                    stage: "segment",
                    message: e.to_string(),
                    hint: "run the render stage first",
                }
            })?;
            segment_nir(
                &nir,
                &SegParams {
                    healthy_threshold: cfg.segmentation.healthy_threshold,
                },
            )
            .map_err(|e| PipelineError::Stage {
                stage: "segment",
                message: e.to_string(),
                hint: "check dye contrast, or supply an external mask",
            })?
        }
    };
    formats::write_mask_pgm(&store.target("mask", "mask.pgm")?, &mask).map_err(io_stage)?;
    println!(
        "segmented mask: {} healthy / {} tumor / {} background pixels",
        mask.count(TissueClass::Healthy),
        mask.count(TissueClass::Tumor),
        mask.count(TissueClass::Background)
    );
    Ok(())
}

fn stage_plan(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let mut store = ArtifactStore::new(&dir, args.overwrite)?;
    let read_hint = "run the render and segment stages first";
    let cloud = formats::read_labeled_cloud_ply(&dir.join("cloud_truth.ply")).map_err(|e| {
        PipelineError::Stage {
            stage: "plan",
            message: e.to_string(),
            hint: read_hint,
        }
    })?;
    let mask = formats::read_mask_pgm(&dir.join("mask.pgm")).map_err(|e| PipelineError::Stage {
        stage: "plan",
        message: e.to_string(),
        hint: read_hint,
    })?;
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
    let (graph, _) = calibrate(&cfg, &depth_cam, &nir_cam)?;
    let projections = project_cloud_to_nir(&cloud, &graph, &nir_cam)?;
    let mut labeled =
        label_cloud(&cloud, &projections, &mask).map_err(|e| PipelineError::Stage {
            stage: "plan",
            message: e.to_string(),
            hint: "mask resolution must match the NIR camera",
        })?;
    let (path, surface, diag) =
        plan_incision(&mut labeled, &cfg.planner).map_err(|e| PipelineError::Stage {
            stage: "plan",
            message: e.to_string(),
            hint: "margin may touch the visible edge; adjust the camera or margin",
        })?;
    formats::write_labeled_cloud_ply(&store.target("labeled", "labeled.ply")?, &labeled)
        .map_err(io_stage)?;
    formats::write_mesh_ply(
        &store.target("surface", "surface.ply")?,
        &surface,
        labeled.labels(),
    )
    .map_err(io_stage)?;
    formats::write_path_csv(&store.target("path_csv", "path.csv")?, &path).map_err(io_stage)?;
    let json = serde_json::json!({
        "margin_mm": cfg.planner.margin_mm,
        "speed_mm_s": cfg.planner.speed_mm_s,
        "perimeter_mm": path.perimeter_mm,
        "total_time_s": path.total_time_s,
        "loop_count": diag.loop_count,
        "path": path,
    });
    std::fs::write(
        store.target("path_json", "path.json")?,
        serde_json::to_string_pretty(&json).expect("serializable"),
    )
    .map_err(io_stage)?;
    println!(
        "planned incision: perimeter {:.1} mm, estimated time {:.1} s",
        path.perimeter_mm, path.total_time_s
    );
    Ok(())
}

fn stage_evaluate(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let mut store = ArtifactStore::new(&dir, args.overwrite)?;
    let read = |name: &str| -> Result<PathBuf, PipelineError> {
        let p = dir.join(name);
        if !p.exists() {
            return Err(PipelineError::Stage {
                stage: "evaluate",
                message: format!("{} is missing", p.display()),
                hint: "run the earlier stages first",
            });
        }
        Ok(p)
    };
    let as_stage = |e: formats::FormatError| PipelineError::Stage {
        stage: "evaluate",
        message: e.to_string(),
        hint: "earlier stage outputs are unreadable",
    };
    let labeled = formats::read_labeled_cloud_ply(&read("labeled.ply")?).map_err(as_stage)?;
    let mask = formats::read_mask_pgm(&read("mask.pgm")?).map_err(as_stage)?;
    let gt_mask = formats::read_mask_pgm(&read("gt_mask.pgm")?).map_err(as_stage)?;
    let nir = formats::read_image_pgm(&read("nir.pgm")?).map_err(as_stage)?;
    let path = formats::read_path_csv(&read("path.csv")?).map_err(as_stage)?;
    let kidney = formats::read_mesh_ply(&read("kidney.ply")?).map_err(as_stage)?;
    let tumor = formats::read_mesh_ply(&read("tumor.ply")?).map_err(as_stage)?;

    let metric_stage = |e: metrics::MetricError| PipelineError::Stage {
        stage: "evaluate",
        message: e.to_string(),
        hint: "inputs degenerate for this metric",
    };
    let dsc2d = metrics::dsc_2d(&mask, &gt_mask).map_err(metric_stage)?;
    let predicted = labeled.points_with_label(TissueClass::Tumor);
    let truth_cloud = labeled.ground_truth_points(TissueClass::Tumor);
    let dsc3d = metrics::dsc_3d(&predicted, &truth_cloud, cfg.evaluation.dsc3d_threshold_mm)
        .map_err(metric_stage)?;
    let mut gt_tumor: Vec<_> = tumor
        .mesh
        .vertices()
        .iter()
        .zip(&tumor.classes)
        .filter(|(_, &c)| c == TissueClass::Tumor)
        .map(|(p, _)| *p)
        .collect();
    gt_tumor.extend(
        kidney
            .mesh
            .vertices()
            .iter()
            .zip(&kidney.classes)
            .filter(|(_, &c)| c == TissueClass::Tumor)
            .map(|(p, _)| *p),
    );
    let margin = metrics::margin_error(
        &path.positions(),
        &gt_tumor,
        cfg.planner.margin_mm,
        cfg.evaluation.tool_offset_mm,
    )
    .map_err(metric_stage)?;
    let sbr = metrics::sbr(
        &nir,
        &gt_mask.pixels_of(TissueClass::Healthy),
        &gt_mask.pixels_of(TissueClass::Background),
    )
    .map_err(metric_stage)?;

    let json = serde_json::json!({
        "dsc_2d": dsc2d,
        "dsc_3d_tumor": dsc3d,
        "sbr_measured": sbr,
        "margin": margin,
    });
    std::fs::write(
        store.target("metrics", "metrics.json")?,
        serde_json::to_string_pretty(&json).expect("serializable"),
    )
    .map_err(io_stage)?;
    println!(
        "evaluated: 2D DSC (tumor) {:.4}, 3D DSC {:.4}, SBR {:.4}, mean |eps| {:.2} mm",
        dsc2d.tumor, dsc3d, sbr, margin.mean_abs
    );
    Ok(())
}

fn cmd_run(args: &CommonArgs) -> Result<(), PipelineError> {
    let cfg = load_config(args)?;
    let dir = out_dir(args);
    let report = run_pipeline(&cfg, &dir, args.overwrite)?;
    println!(
        "run '{}' complete: 2D DSC (weighted) {:.4}, 3D DSC {:.4}, SBR {:.4}, \
         perimeter {:.1} mm, estimated time {:.1} s",
        report.name,
        report.segmentation.dsc_2d.weighted_mean,
        report.fusion.dsc_3d_tumor,
        report.metrics.sbr_measured,
        report.planner.perimeter_mm,
        report.planner.total_time_s
    );
    println!("report: {}", dir.join("report.json").display());
    Ok(())
}

fn cmd_batch(common: &CommonArgs, configs: &[PathBuf]) -> ExitCode {
    let dir = out_dir(common);
    let mut runs = Vec::new();
    for path in configs {
        let mut cfg = match ExperimentConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        };
        if let Some(seed) = common.seed {
            cfg.seed = seed;
            cfg.phantom.seed = seed;
        }
        if let Some(margin) = common.margin {
            cfg.planner.margin_mm = margin;
        }
        if let Some(speed) = common.speed {
            cfg.planner.speed_mm_s = speed;
        }
        let name = run_name(path, &cfg);
        runs.push((name, cfg));
    }
    match run_batch(&runs, &dir, common.overwrite) {
        Ok(outcome) => {
            for row in &outcome.rows {
                println!(
                    "{}: hausdorff {:.3} mm, 2D DSC {:.4}, 3D DSC {:.4}, mean |eps| {:.2} mm, \
                     time {:.1} s",
                    row.run,
                    row.hausdorff_mm,
                    row.dsc_2d,
                    row.dsc_3d,
                    row.mean_abs_eps_mm,
                    row.time_estimate_s
                );
            }
            for (name, err) in &outcome.failures {
                eprintln!("run '{name}' failed: {err}");
            }
            println!("summary: {}", dir.join("summary.csv").display());
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PipelineError::Validation(_) => ExitCode::from(1),
                PipelineError::Stage { .. } => ExitCode::from(2),
            }
        }
    }
}

fn run_name(path: &Path, cfg: &ExperimentConfig) -> String {
    if !cfg.name.is_empty() && cfg.name != "default" {
        cfg.name.clone()
    } else {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string())
    }
}
