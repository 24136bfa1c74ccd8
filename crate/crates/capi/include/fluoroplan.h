#ifndef FLUOROPLAN_H
#define FLUOROPLAN_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum FpStatus {
  FP_STATUS_OK = 0,
  FP_STATUS_INVALID_ARGUMENT = 1,
  FP_STATUS_IO = 2,
  FP_STATUS_PIPELINE = 3,
} FpStatus;

// Opaque labeled point cloud handle.
typedef struct FpCloud FpCloud;

// Opaque incision path handle.
typedef struct FpPath FpPath;

// One timed tool pose: position plus outward tool axis.
typedef struct FpToolPose {
  double t_s;
  double x_mm;
  double y_mm;
  double z_mm;
  double nx;
  double ny;
  double nz;
} FpToolPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *fp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *fp_version(void);

// Runs the full pipeline for a TOML config file, writing artifacts and
// report into `out_dir`.
//
// # Safety
// `config_path` and `out_dir` must be NUL-terminated strings valid for
// the duration of the call.
enum FpStatus fp_run_pipeline(const char *config_path, const char *out_dir, bool overwrite);

// Loads a labeled cloud from an ASCII PLY written by this pipeline.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must point to writable
// storage for one pointer.
enum FpStatus fp_cloud_load_ply(const char *path, struct FpCloud **out);

// Number of points in the cloud; 0 for NULL.
//
// # Safety
// `cloud` must be NULL or a live handle from `fp_cloud_load_ply`.
uintptr_t fp_cloud_len(const struct FpCloud *cloud);

// # Safety
// `cloud` must be NULL or an owned handle not freed before.
void fp_cloud_free(struct FpCloud *cloud);

// Plans the incision path on a labeled cloud: margin labeling, surface
// reconstruction, loop extraction, and tool-path timing. The cloud's
// labels gain the margin class. Pass `ball_radius_mm <= 0` to derive the
// pivot radius from the sampling density.
//
// # Safety
// `cloud` must be a live handle; `out` must point to writable storage
// for one pointer.
enum FpStatus fp_plan(struct FpCloud *cloud,
                      double margin_mm,
                      double speed_mm_s,
                      double max_step_mm,
                      double ball_radius_mm,
                      struct FpPath **out);

// Number of poses in the path; 0 for NULL.
//
// # Safety
// `path` must be NULL or a live handle from `fp_plan`.
uintptr_t fp_path_len(const struct FpPath *path);

// Copies pose `index` into `out_pose`.
//
// # Safety
// `path` must be a live handle; `out_pose` must point to writable
// storage for one `FpToolPose`.
enum FpStatus fp_path_pose(const struct FpPath *path, uintptr_t index, struct FpToolPose *out_pose);

// Total traversal time of the closed path in seconds; NaN for NULL.
//
// # Safety
// `path` must be NULL or a live handle.
double fp_path_total_time_s(const struct FpPath *path);

// Path perimeter in millimeters; NaN for NULL.
//
// # Safety
// `path` must be NULL or a live handle.
double fp_path_perimeter_mm(const struct FpPath *path);

// Writes the path as `t,x,y,z,nx,ny,nz` CSV.
//
// # Safety
// `path` must be a live handle; `file` must be a NUL-terminated string.
enum FpStatus fp_path_save_csv(const struct FpPath *path, const char *file);

// # Safety
// `path` must be NULL or an owned handle not freed before.
void fp_path_free(struct FpPath *path);

// Symmetric Hausdorff distance between two xyz-triple buffers.
//
// # Safety
// `a_xyz` and `b_xyz` must hold `3 * a_count` / `3 * b_count` doubles;
// `out_mm` must point to writable storage for one double.
enum FpStatus fp_hausdorff(const double *a_xyz,
                           uintptr_t a_count,
                           const double *b_xyz,
                           uintptr_t b_count,
                           double *out_mm);

// 3D Dice score under a strict proximity threshold.
//
// # Safety
// Buffer contracts as in `fp_hausdorff`; `out_score` must be writable.
enum FpStatus fp_dsc3d(const double *a_xyz,
                       uintptr_t a_count,
                       const double *b_xyz,
                       uintptr_t b_count,
                       double threshold_mm,
                       double *out_score);

// Margin-error statistics of an incision point set against a tumor point
// set: the signed per-point error is `(nearest tumor distance +
// tool_offset) - margin`.
//
// # Safety
// Buffer contracts as in `fp_hausdorff`; the three `out_*` pointers must
// each reference writable storage for one double.
enum FpStatus fp_margin_error(const double *incision_xyz,
                              uintptr_t incision_count,
                              const double *tumor_xyz,
                              uintptr_t tumor_count,
                              double margin_mm,
                              double tool_offset_mm,
                              double *out_mean,
                              double *out_std,
                              double *out_mean_abs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUOROPLAN_H */
