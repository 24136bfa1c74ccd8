//! Exercises the C ABI from Rust: handle lifecycle, planning, metric
//! entry points, and error reporting.

use std::ffi::{CStr, CString};
use std::ptr;

use fluoroplan_capi::*;

fn labeled_cloud_fixture(dir: &std::path::Path) -> std::path::PathBuf {
    // Planar grid with a disk of tumor labels in the middle.
    use fluoroplan::cloud::{LabeledPointCloud, TissueClass};
    use fluoroplan::geometry::Point3;
    let n = 28;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for y in 0..n {
        for x in 0..n {
            let (fx, fy) = (x as f64, y as f64);
            points.push(Point3::new(fx, fy, 0.0));
            let d = ((fx - 13.5).powi(2) + (fy - 13.5).powi(2)).sqrt();
            labels.push(if d <= 4.0 {
                TissueClass::Tumor
            } else {
                TissueClass::Healthy
            });
        }
    }
    let cloud = LabeledPointCloud::new("world", points, labels).unwrap();
    let path = dir.join("cloud.ply");
    fluoroplan::formats::write_labeled_cloud_ply(&path, &cloud).unwrap();
    path
}

#[test]
fn version_and_error_message_are_strings() {
    let version = unsafe { CStr::from_ptr(fp_version()) };
    assert!(!version.to_str().unwrap().is_empty());
    let message = unsafe { CStr::from_ptr(fp_last_error_message()) };
    assert!(message.to_str().is_ok());
}

#[test]
fn cloud_plan_path_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let ply = labeled_cloud_fixture(dir.path());
    let c_path = CString::new(ply.to_str().unwrap()).unwrap();

    unsafe {
        let mut cloud: *mut FpCloud = ptr::null_mut();
        assert_eq!(fp_cloud_load_ply(c_path.as_ptr(), &mut cloud), FpStatus::Ok);
        assert_eq!(fp_cloud_len(cloud), 28 * 28);

        let mut path: *mut FpPath = ptr::null_mut();
        assert_eq!(
            fp_plan(cloud, 5.0, 2.0, 1.0, 1.5, &mut path),
            FpStatus::Ok,
            "plan failed: {}",
            CStr::from_ptr(fp_last_error_message()).to_string_lossy()
        );
        let n = fp_path_len(path);
        assert!(n >= 12);
        let mut pose = FpToolPose {
            t_s: 0.0,
            x_mm: 0.0,
            y_mm: 0.0,
            z_mm: 0.0,
            nx: 0.0,
            ny: 0.0,
            nz: 0.0,
        };
        assert_eq!(fp_path_pose(path, 0, &mut pose), FpStatus::Ok);
        assert_eq!(pose.t_s, 0.0);
        let axis_norm = (pose.nx * pose.nx + pose.ny * pose.ny + pose.nz * pose.nz).sqrt();
        assert!((axis_norm - 1.0).abs() < 1e-9);
        assert!(fp_path_total_time_s(path) > 0.0);
        assert!(fp_path_perimeter_mm(path) > 0.0);

        let csv = dir.path().join("path.csv");
        let c_csv = CString::new(csv.to_str().unwrap()).unwrap();
        assert_eq!(fp_path_save_csv(path, c_csv.as_ptr()), FpStatus::Ok);
        assert!(csv.exists());

        // Out-of-range pose index reports through the error channel.
        assert_eq!(
            fp_path_pose(path, usize::MAX, &mut pose),
            FpStatus::InvalidArgument
        );
        let msg = CStr::from_ptr(fp_last_error_message()).to_string_lossy();
        assert!(msg.contains("out of range"));

        fp_path_free(path);
        fp_cloud_free(cloud);
        // Freeing NULL is a no-op.
        fp_path_free(ptr::null_mut());
        fp_cloud_free(ptr::null_mut());
    }
}

#[test]
fn metric_entry_points_match_library() {
    let a = [0.0f64, 0.0, 0.0, 1.0, 0.0, 0.0];
    let b = [0.0f64, 0.0, 0.0];
    unsafe {
        let mut h = 0.0;
        assert_eq!(
            fp_hausdorff(a.as_ptr(), 2, b.as_ptr(), 1, &mut h),
            FpStatus::Ok
        );
        assert_eq!(h, 1.0);

        let mut score = 0.0;
        assert_eq!(
            fp_dsc3d(a.as_ptr(), 2, a.as_ptr(), 2, 0.1, &mut score),
            FpStatus::Ok
        );
        assert_eq!(score, 1.0);

        let incision = [7.61f64, 0.0, 0.0];
        let tumor = [0.0f64, 0.0, 0.0];
        let (mut mean, mut std, mut mean_abs) = (0.0, 0.0, 0.0);
        assert_eq!(
            fp_margin_error(
                incision.as_ptr(),
                1,
                tumor.as_ptr(),
                1,
                5.0,
                0.5,
                &mut mean,
                &mut std,
                &mut mean_abs
            ),
            FpStatus::Ok
        );
        assert!((mean - 3.11).abs() < 1e-12);

        // Empty sets are rejected with a message.
        assert_eq!(
            fp_hausdorff(ptr::null(), 0, b.as_ptr(), 1, &mut h),
            FpStatus::InvalidArgument
        );
    }
}

#[test]
fn whole_pipeline_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let config_dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let config = config_dir.join("phantom1.toml").canonicalize().unwrap();
    let c_cfg = CString::new(config.to_str().unwrap()).unwrap();
    let c_out = CString::new(dir.path().to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(
            fp_run_pipeline(c_cfg.as_ptr(), c_out.as_ptr(), false),
            FpStatus::Ok,
            "pipeline failed: {}",
            CStr::from_ptr(fp_last_error_message()).to_string_lossy()
        );
    }
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("path.csv").exists());
}
