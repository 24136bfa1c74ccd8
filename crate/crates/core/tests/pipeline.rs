//! End-to-end pipeline checks: artifact round-trips, determinism under a
//! fixed seed, error policy, and batch behavior.

use std::path::Path;

use fluoroplan::cloud::TissueClass;
use fluoroplan::config::ExperimentConfig;
use fluoroplan::formats;
use fluoroplan::pipeline::{run_batch, run_pipeline, PipelineError};

fn read_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

/// Smaller scene so the suite stays quick.
fn test_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.name = format!("test-{seed}");
    cfg.seed = seed;
    cfg.phantom.seed = seed;
    cfg.phantom.tessellation_density = 0.15;
    cfg.cameras.depth.width = 240;
    cfg.cameras.depth.height = 180;
    cfg.cameras.nir.width = 480;
    cfg.cameras.nir.height = 270;
    cfg
}

#[test]
fn full_run_produces_consistent_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = test_config(11);
    let report = run_pipeline(&cfg, dir.path(), false).expect("pipeline");

    // Segmentation and fusion quality on a clean synthetic scene.
    assert!(report.segmentation.dsc_2d.tumor > 0.9, "2D tumor DSC {}", report.segmentation.dsc_2d.tumor);
    assert!(report.fusion.dsc_3d_tumor > 0.9, "3D DSC {}", report.fusion.dsc_3d_tumor);
    assert!(report.metrics.sbr_measured > 1.0);
    assert_eq!(report.planner.loop_count, 1);

    // Every exported file re-imports through its own reader.
    let cloud = formats::read_labeled_cloud_ply(&dir.path().join("cloud_truth.ply")).unwrap();
    assert!(cloud.len() > 1000);
    assert!(cloud.ground_truth().is_some());
    let labeled = formats::read_labeled_cloud_ply(&dir.path().join("labeled.ply")).unwrap();
    assert_eq!(labeled.len(), cloud.len());
    assert!(labeled
        .labels()
        .iter()
        .any(|&c| c == TissueClass::Margin));
    let kidney = formats::read_mesh_ply(&dir.path().join("kidney.ply")).unwrap();
    assert_eq!(kidney.classes.len(), kidney.mesh.vertices().len());
    formats::read_mesh_ply(&dir.path().join("surface.ply")).unwrap();
    let mask = formats::read_mask_pgm(&dir.path().join("mask.pgm")).unwrap();
    assert!(mask.count(TissueClass::Tumor) > 0);
    formats::read_mask_pgm(&dir.path().join("gt_mask.pgm")).unwrap();
    formats::read_image_pgm(&dir.path().join("nir.pgm")).unwrap();
    formats::read_image_pgm(&dir.path().join("depth.pgm")).unwrap();
    formats::read_image_png(&dir.path().join("nir.png")).unwrap();
    let path = formats::read_path_csv(&dir.path().join("path.csv")).unwrap();
    assert_eq!(path.poses.len(), report.planner.loop_vertex_count.max(3).max(path.poses.len()));
    let report_text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(report_text.contains("\"dsc_3d_tumor\""));
    // The report deserializes back to the same values it was built from.
    let reread: fluoroplan::pipeline::RunReport = serde_json::from_str(&report_text).unwrap();
    assert_eq!(reread.fusion.dsc_3d_tumor, report.fusion.dsc_3d_tumor);
    assert_eq!(reread.metrics.margin.errors, report.metrics.margin.errors);
    assert_eq!(reread.config, report.config);

    // Report statistics are recomputable from the per-point errors.
    let margin = &report.metrics.margin;
    let n = margin.errors.len() as f64;
    let mean = margin.errors.iter().sum::<f64>() / n;
    assert!((mean - margin.mean).abs() < 1e-9);
}

#[test]
fn reruns_with_same_seed_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let cfg = test_config(29);
    run_pipeline(&cfg, dir_a.path(), false).expect("first run");
    run_pipeline(&cfg, dir_b.path(), false).expect("second run");
    for name in [
        "kidney.ply",
        "tumor.ply",
        "cloud_truth.ply",
        "labeled.ply",
        "surface.ply",
        "nir.pgm",
        "depth.pgm",
        "gt_mask.pgm",
        "mask.pgm",
        "path.csv",
        "config.toml",
    ] {
        assert_eq!(
            read_bytes(dir_a.path(), name),
            read_bytes(dir_b.path(), name),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn overwrite_flag_is_required_for_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = test_config(31);
    run_pipeline(&cfg, dir.path(), false).expect("first run");
    match run_pipeline(&cfg, dir.path(), false) {
        Err(PipelineError::Stage { stage: "io", .. }) => {}
        other => panic!("expected io overwrite refusal, got {other:?}"),
    }
    run_pipeline(&cfg, dir.path(), true).expect("overwrite allowed");
}

#[test]
fn invalid_margin_fails_validation_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = test_config(37);
    cfg.planner.margin_mm = 0.0;
    match run_pipeline(&cfg, dir.path(), false) {
        Err(PipelineError::Validation(msg)) => {
            assert!(msg.contains("margin"));
        }
        other => panic!("expected validation error, got {other:?}"),
    }
    assert!(!dir.path().join("kidney.ply").exists());
}

#[test]
fn batch_continues_past_failures() {
    let dir = tempfile::tempdir().unwrap();
    let good_a = test_config(41);
    let good_b = test_config(43);
    let mut bad = test_config(47);
    bad.planner.margin_mm = -1.0;
    let runs = vec![
        ("a".to_string(), good_a),
        ("bad".to_string(), bad),
        ("b".to_string(), good_b),
    ];
    let outcome = run_batch(&runs, dir.path(), false).expect("batch");
    assert_eq!(outcome.rows.len(), 2);
    assert_eq!(outcome.failures.len(), 1);
    assert_eq!(outcome.failures[0].0, "bad");
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert!(summary.lines().count() == 3); // header + 2 rows
    assert!(dir.path().join("a/epsilon.csv").exists());
}

#[test]
fn depth_noise_lifts_points_off_the_true_surface() {
    // Depth noise displaces samples along their rays, so the observed
    // tumor points drift away from the true tumor surface.
    let clean = fluoroplan::pipeline::run_fusion(&test_config(53)).expect("clean");
    let mut noisy_cfg = test_config(53);
    noisy_cfg.cameras.depth.depth_noise_std_mm = 2.0;
    let noisy = fluoroplan::pipeline::run_fusion(&noisy_cfg).expect("noisy");

    let truth = clean.scene.ground_truth_tumor_points();
    let observed_clean = clean
        .labeled
        .points_with_label(fluoroplan::cloud::TissueClass::Tumor);
    let observed_noisy = noisy
        .labeled
        .points_with_label(fluoroplan::cloud::TissueClass::Tumor);
    let h_clean = fluoroplan::metrics::directed_hausdorff(&observed_clean, &truth).unwrap();
    let h_noisy = fluoroplan::metrics::directed_hausdorff(&observed_noisy, &truth).unwrap();
    assert!(
        h_noisy > h_clean + 1.0,
        "2 mm depth noise must push tumor points off the surface ({h_clean:.2} -> {h_noisy:.2})"
    );
    // Zero noise with the same seed reproduces the clean cloud exactly.
    let repeat = fluoroplan::pipeline::run_fusion(&test_config(53)).expect("repeat");
    assert_eq!(repeat.labeled.points(), clean.labeled.points());
}

#[test]
fn conflicting_extra_frame_edge_fails_calibration() {
    use fluoroplan::config::FrameEdgeConfig;
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = test_config(59);
    // An edge between already-connected frames that disagrees with the
    // existing path must be rejected.
    cfg.calibration.extra_edges.push(FrameEdgeConfig {
        from: "depth_cam".into(),
        to: "world".into(),
        translation_mm: [1.0, 0.0, 0.0],
        rotation_axis: [0.0, 0.0, 1.0],
        rotation_angle_deg: 0.0,
    });
    match run_pipeline(&cfg, dir.path(), false) {
        Err(PipelineError::Stage {
            stage: "calibrate", ..
        }) => {}
        other => panic!("expected calibrate failure, got {other:?}"),
    }
    // A consistent extra frame (e.g. a robot base) is accepted.
    let mut cfg = test_config(61);
    cfg.calibration.extra_edges.push(FrameEdgeConfig {
        from: "world".into(),
        to: "robot_base".into(),
        translation_mm: [100.0, 50.0, 0.0],
        rotation_axis: [0.0, 0.0, 1.0],
        rotation_angle_deg: 90.0,
    });
    let dir2 = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, dir2.path(), false).expect("extra frame accepted");
}

#[test]
fn empty_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_batch(&[], dir.path(), false),
        Err(PipelineError::Validation(_))
    ));
}
