//! C ABI for the incision-planning pipeline.
//!
//! Handles are opaque pointers owned by this library; every `*_new` or
//! `*_load` has a matching `*_free`. Functions return `FpStatus`; on any
//! non-OK status `fp_last_error_message` describes the failure for the
//! calling thread. The generated header lives at `include/fluoroplan.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use fluoroplan::cloud::LabeledPointCloud;
use fluoroplan::formats;
use fluoroplan::geometry::Point3;
use fluoroplan::metrics;
use fluoroplan::pipeline;
use fluoroplan::planner::{plan_incision, IncisionPath, PlannerConfig};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Pipeline = 3,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(message: impl Into<String>) {
    let message = message.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() =
            CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    });
}

/// Message describing the most recent failure on this thread. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

unsafe fn path_arg(raw: *const c_char, what: &str) -> Result<PathBuf, FpStatus> {
    if raw.is_null() {
        set_error(format!("{what} is NULL"));
        return Err(FpStatus::InvalidArgument);
    }
    match CStr::from_ptr(raw).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            Err(FpStatus::InvalidArgument)
        }
    }
}

/// Runs the full pipeline for a TOML config file, writing artifacts and
/// report into `out_dir`.
///
/// # Safety
/// `config_path` and `out_dir` must be NUL-terminated strings valid for
/// the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn fp_run_pipeline(
    config_path: *const c_char,
    out_dir: *const c_char,
    overwrite: bool,
) -> FpStatus {
    let config_path = match path_arg(config_path, "config_path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let out_dir = match path_arg(out_dir, "out_dir") {
        Ok(p) => p,
        Err(status) => return status,
    };
    let cfg = match fluoroplan::config::ExperimentConfig::load(&config_path) {
        Ok(cfg) => cfg,
        Err(e) => {
            set_error(e.to_string());
            return FpStatus::InvalidArgument;
        }
    };
    match pipeline::run_pipeline(&cfg, &out_dir, overwrite) {
        Ok(_) => FpStatus::Ok,
        Err(pipeline::PipelineError::Validation(msg)) => {
            set_error(msg);
            FpStatus::InvalidArgument
        }
        Err(e) => {
            set_error(e.to_string());
            FpStatus::Pipeline
        }
    }
}

/// Opaque labeled point cloud handle.
pub struct FpCloud {
    inner: LabeledPointCloud,
}

/// Opaque incision path handle.
pub struct FpPath {
    inner: IncisionPath,
}

/// One timed tool pose: position plus outward tool axis.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FpToolPose {
    pub t_s: f64,
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
}

/// Loads a labeled cloud from an ASCII PLY written by this pipeline.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_cloud_load_ply(
    path: *const c_char,
    out: *mut *mut FpCloud,
) -> FpStatus {
    if out.is_null() {
        set_error("out is NULL");
        return FpStatus::InvalidArgument;
    }
    let path = match path_arg(path, "path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match formats::read_labeled_cloud_ply(&path) {
        Ok(cloud) => {
            *out = Box::into_raw(Box::new(FpCloud { inner: cloud }));
            FpStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            *out = ptr::null_mut();
            FpStatus::Io
        }
    }
}

/// Number of points in the cloud; 0 for NULL.
///
/// # Safety
/// `cloud` must be NULL or a live handle from `fp_cloud_load_ply`.
#[no_mangle]
pub unsafe extern "C" fn fp_cloud_len(cloud: *const FpCloud) -> usize {
    if cloud.is_null() {
        return 0;
    }
    (*cloud).inner.len()
}

/// # Safety
/// `cloud` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_cloud_free(cloud: *mut FpCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Plans the incision path on a labeled cloud: margin labeling, surface
/// reconstruction, loop extraction, and tool-path timing. The cloud's
/// labels gain the margin class. Pass `ball_radius_mm <= 0` to derive the
/// pivot radius from the sampling density.
///
/// # Safety
/// `cloud` must be a live handle; `out` must point to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fp_plan(
    cloud: *mut FpCloud,
    margin_mm: f64,
    speed_mm_s: f64,
    max_step_mm: f64,
    ball_radius_mm: f64,
    out: *mut *mut FpPath,
) -> FpStatus {
    if cloud.is_null() || out.is_null() {
        set_error("cloud or out is NULL");
        return FpStatus::InvalidArgument;
    }
    let config = PlannerConfig {
        margin_mm,
        speed_mm_s,
        max_step_mm,
        ball_radius_mm: if ball_radius_mm > 0.0 {
            Some(ball_radius_mm)
        } else {
            None
        },
    };
    match plan_incision(&mut (*cloud).inner, &config) {
        Ok((path, _, _)) => {
            *out = Box::into_raw(Box::new(FpPath { inner: path }));
            FpStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            *out = ptr::null_mut();
            FpStatus::Pipeline
        }
    }
}

/// Number of poses in the path; 0 for NULL.
///
/// # Safety
/// `path` must be NULL or a live handle from `fp_plan`.
#[no_mangle]
pub unsafe extern "C" fn fp_path_len(path: *const FpPath) -> usize {
    if path.is_null() {
        return 0;
    }
    (*path).inner.poses.len()
}

/// Copies pose `index` into `out_pose`.
///
/// # Safety
/// `path` must be a live handle; `out_pose` must point to writable
/// storage for one `FpToolPose`.
#[no_mangle]
pub unsafe extern "C" fn fp_path_pose(
    path: *const FpPath,
    index: usize,
    out_pose: *mut FpToolPose,
) -> FpStatus {
    if path.is_null() || out_pose.is_null() {
        set_error("path or out_pose is NULL");
        return FpStatus::InvalidArgument;
    }
    let inner = &(*path).inner;
    if index >= inner.poses.len() {
        set_error(format!(
            "pose index {index} out of range ({} poses)",
            inner.poses.len()
        ));
        return FpStatus::InvalidArgument;
    }
    let pose = &inner.poses[index];
    *out_pose = FpToolPose {
        t_s: inner.timestamps_s[index],
        x_mm: pose.position.x,
        y_mm: pose.position.y,
        z_mm: pose.position.z,
        nx: pose.axis.x,
        ny: pose.axis.y,
        nz: pose.axis.z,
    };
    FpStatus::Ok
}

/// Total traversal time of the closed path in seconds; NaN for NULL.
///
/// # Safety
/// `path` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_path_total_time_s(path: *const FpPath) -> f64 {
    if path.is_null() {
        return f64::NAN;
    }
    (*path).inner.total_time_s
}

/// Path perimeter in millimeters; NaN for NULL.
///
/// # Safety
/// `path` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fp_path_perimeter_mm(path: *const FpPath) -> f64 {
    if path.is_null() {
        return f64::NAN;
    }
    (*path).inner.perimeter_mm
}

/// Writes the path as `t,x,y,z,nx,ny,nz` CSV.
///
/// # Safety
/// `path` must be a live handle; `file` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fp_path_save_csv(path: *const FpPath, file: *const c_char) -> FpStatus {
    if path.is_null() {
        set_error("path is NULL");
        return FpStatus::InvalidArgument;
    }
    let file = match path_arg(file, "file") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match formats::write_path_csv(&file, &(*path).inner) {
        Ok(()) => FpStatus::Ok,
        Err(e) => {
            set_error(e.to_string());
            FpStatus::Io
        }
    }
}

/// # Safety
/// `path` must be NULL or an owned handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn fp_path_free(path: *mut FpPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

unsafe fn points_arg(
    ptr_xyz: *const f64,
    count: usize,
    what: &str,
) -> Result<Vec<Point3>, FpStatus> {
    if ptr_xyz.is_null() && count > 0 {
        set_error(format!("{what} is NULL with non-zero count"));
        return Err(FpStatus::InvalidArgument);
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let raw = std::slice::from_raw_parts(ptr_xyz, count * 3);
    Ok(raw
        .chunks_exact(3)
        .map(|c| Point3::new(c[0], c[1], c[2]))
        .collect())
}

/// Symmetric Hausdorff distance between two xyz-triple buffers.
///
/// # Safety
/// `a_xyz` and `b_xyz` must hold `3 * a_count` / `3 * b_count` doubles;
/// `out_mm` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn fp_hausdorff(
    a_xyz: *const f64,
    a_count: usize,
    b_xyz: *const f64,
    b_count: usize,
    out_mm: *mut f64,
) -> FpStatus {
    if out_mm.is_null() {
        set_error("out_mm is NULL");
        return FpStatus::InvalidArgument;
    }
    let a = match points_arg(a_xyz, a_count, "a_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    let b = match points_arg(b_xyz, b_count, "b_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    match metrics::hausdorff(&a, &b) {
        Ok(d) => {
            *out_mm = d;
            FpStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            FpStatus::InvalidArgument
        }
    }
}

/// 3D Dice score under a strict proximity threshold.
///
/// # Safety
/// Buffer contracts as in `fp_hausdorff`; `out_score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fp_dsc3d(
    a_xyz: *const f64,
    a_count: usize,
    b_xyz: *const f64,
    b_count: usize,
    threshold_mm: f64,
    out_score: *mut f64,
) -> FpStatus {
    if out_score.is_null() {
        set_error("out_score is NULL");
        return FpStatus::InvalidArgument;
    }
    let a = match points_arg(a_xyz, a_count, "a_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    let b = match points_arg(b_xyz, b_count, "b_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    match metrics::dsc_3d(&a, &b, threshold_mm) {
        Ok(score) => {
            *out_score = score;
            FpStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            FpStatus::InvalidArgument
        }
    }
}

/// Margin-error statistics of an incision point set against a tumor point
/// set: the signed per-point error is `(nearest tumor distance +
/// tool_offset) - margin`.
///
/// # Safety
/// Buffer contracts as in `fp_hausdorff`; the three `out_*` pointers must
/// each reference writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn fp_margin_error(
    incision_xyz: *const f64,
    incision_count: usize,
    tumor_xyz: *const f64,
    tumor_count: usize,
    margin_mm: f64,
    tool_offset_mm: f64,
    out_mean: *mut f64,
    out_std: *mut f64,
    out_mean_abs: *mut f64,
) -> FpStatus {
    if out_mean.is_null() || out_std.is_null() || out_mean_abs.is_null() {
        set_error("an output pointer is NULL");
        return FpStatus::InvalidArgument;
    }
    let incision = match points_arg(incision_xyz, incision_count, "incision_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    let tumor = match points_arg(tumor_xyz, tumor_count, "tumor_xyz") {
        Ok(v) => v,
        Err(status) => return status,
    };
    match metrics::margin_error(&incision, &tumor, margin_mm, tool_offset_mm) {
        Ok(report) => {
            *out_mean = report.mean;
            *out_std = report.std;
            *out_mean_abs = report.mean_abs;
            FpStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            FpStatus::InvalidArgument
        }
    }
}
