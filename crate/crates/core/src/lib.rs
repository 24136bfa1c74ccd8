//! Fluorescence-guided tumor margin delineation and incision planning on
//! synthetic kidney scenes.
//!
//! The pipeline mirrors a dual-camera surgical perception rig end to end:
//!
//! 1. **phantom** – generate a kidney/tumor scene and render it through
//!    virtual depth and NIR cameras.
//! 2. **calib** – pinhole projection and the rigid-frame graph linking the
//!    cameras, with least-squares rigid registration for estimated edges.
//! 3. **seg** – threshold/enclosure segmentation of the NIR image and label
//!    transfer onto the depth point cloud.
//! 4. **planner** – surgical-margin labeling, ball-pivoting surface
//!    reconstruction, incision-loop extraction, and timed tool paths.
//! 5. **metrics** – Hausdorff distance, signal-to-background ratio, Dice
//!    scores in 2D and 3D, and margin-error reports.
//!
//! All lengths are millimeters; times are seconds.

pub mod calib;
pub mod cloud;
pub mod config;
pub mod formats;
pub mod geometry;
pub mod img;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod planner;
pub mod seg;
