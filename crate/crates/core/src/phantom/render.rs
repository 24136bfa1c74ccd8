//! Virtual depth and NIR renders of a scene. One ray per pixel center;
//! the first surface hit wins, so occluded regions simply produce no
//! points (the single-view visibility gaps the planner has to live with).
//!
//! Noise is a pure function of (seed, pixel index), which keeps renders
//! deterministic regardless of the parallel schedule.

use rayon::prelude::*;

use crate::calib::CameraModel;
use crate::cloud::{LabeledPointCloud, TissueClass};
use crate::geometry::Point3;
use crate::img::IntensityImage;

use super::{DyeModel, PhantomError, Raycaster, Scene};

/// Options for the depth render. Depth is perfect by default; additive
/// Gaussian noise along the ray is available to stress-test fusion.
#[derive(Debug, Clone, Copy)]
pub struct DepthRenderOptions {
    pub depth_noise_std_mm: f64,
    pub seed: u64,
}

impl Default for DepthRenderOptions {
    fn default() -> Self {
        Self {
            depth_noise_std_mm: 0.0,
            seed: 0,
        }
    }
}

/// Renders the scene into a world-frame point cloud with hidden
/// ground-truth classes. Fails when nothing is visible.
pub fn render_depth_cloud(
    scene: &Scene,
    cam: &CameraModel,
    resolution: (u32, u32),
    options: &DepthRenderOptions,
) -> Result<LabeledPointCloud, PhantomError> {
    let cam = scaled_camera(cam, resolution)?;
    let surfaces = scene.surfaces();
    let caster = Raycaster::new(&surfaces);
    let cam_to_world = cam.pose.inverse();
    let origin = cam_to_world.apply(&Point3::ORIGIN);

    let (w, h) = resolution;
    let hits: Vec<Option<(Point3, TissueClass)>> = (0..w as u64 * h as u64)
        .into_par_iter()
        .map(|i| {
            let x = (i % w as u64) as f64;
            let y = (i / w as u64) as f64;
            let dir_cam = cam.pixel_ray(x + 0.5, y + 0.5);
            let dir = cam_to_world.apply_vec(&dir_cam);
            caster.cast(&origin, &dir).map(|hit| {
                let t = if options.depth_noise_std_mm > 0.0 {
                    (hit.t + options.depth_noise_std_mm * pixel_gauss(options.seed, i)).max(0.0)
                } else {
                    hit.t
                };
                (origin + dir.scale(t), hit.class)
            })
        })
        .collect();

    let mut points = Vec::new();
    let mut truth = Vec::new();
    for hit in hits.into_iter().flatten() {
        points.push(hit.0);
        truth.push(hit.1);
    }
    if points.is_empty() {
        return Err(PhantomError::EmptyRender);
    }
    let cloud = LabeledPointCloud::unlabeled("world", points)
        .with_ground_truth(truth)
        .expect("lengths match by construction");
    Ok(cloud)
}

/// Renders the NIR camera view: healthy tissue glows according to the dye
/// model, tumor tissue stays dark, empty pixels sit at the background
/// level. Multiplicative Gaussian noise per pixel, deterministic in
/// (seed, pixel).
pub fn render_nir_image(
    scene: &Scene,
    cam: &CameraModel,
    dye: &DyeModel,
    resolution: (u32, u32),
    seed: u64,
) -> Result<IntensityImage, PhantomError> {
    dye.validate()?;
    let cam = scaled_camera(cam, resolution)?;
    let surfaces = scene.surfaces();
    let caster = Raycaster::new(&surfaces);
    let cam_to_world = cam.pose.inverse();
    let origin = cam_to_world.apply(&Point3::ORIGIN);
    let healthy_level = dye.healthy_level(scene.dye_concentration);

    let (w, h) = resolution;
    let values: Vec<f64> = (0..w as u64 * h as u64)
        .into_par_iter()
        .map(|i| {
            let x = (i % w as u64) as f64;
            let y = (i / w as u64) as f64;
            let dir_cam = cam.pixel_ray(x + 0.5, y + 0.5);
            let dir = cam_to_world.apply_vec(&dir_cam);
            let base = match caster.cast(&origin, &dir) {
                Some(hit) => match hit.class {
                    TissueClass::Tumor => dye.tumor_level,
                    _ => healthy_level,
                },
                None => dye.background_level,
            };
            if dye.noise_std > 0.0 {
                (base * (1.0 + dye.noise_std * pixel_gauss(seed, i))).max(0.0)
            } else {
                base
            }
        })
        .collect();
    if values.iter().all(|&v| v == dye.background_level) {
        return Err(PhantomError::EmptyRender);
    }
    Ok(IntensityImage::from_values(w, h, values).expect("non-negative by construction"))
}

/// Depth image in millimeters (camera-frame z of the first hit); pixels
/// whose ray misses every surface stay invalid.
pub fn render_depth_image(
    scene: &Scene,
    cam: &CameraModel,
    resolution: (u32, u32),
) -> Result<IntensityImage, PhantomError> {
    let cam = scaled_camera(cam, resolution)?;
    let surfaces = scene.surfaces();
    let caster = Raycaster::new(&surfaces);
    let cam_to_world = cam.pose.inverse();
    let origin = cam_to_world.apply(&Point3::ORIGIN);
    let (w, h) = resolution;
    let depths: Vec<Option<f64>> = (0..w as u64 * h as u64)
        .into_par_iter()
        .map(|i| {
            let x = (i % w as u64) as f64;
            let y = (i / w as u64) as f64;
            let dir_cam = cam.pixel_ray(x + 0.5, y + 0.5);
            let dir = cam_to_world.apply_vec(&dir_cam);
            caster
                .cast(&origin, &dir)
                .map(|hit| cam.pose.apply(&hit.point).z)
        })
        .collect();
    if depths.iter().all(Option::is_none) {
        return Err(PhantomError::EmptyRender);
    }
    let mut img = IntensityImage::new(w, h).expect("non-zero resolution");
    for (i, d) in depths.into_iter().enumerate() {
        if let Some(d) = d {
            img.set((i % w as usize) as u32, (i / w as usize) as u32, d.max(0.0));
        }
    }
    Ok(img)
}

/// Per-pixel ground-truth classes as seen by the camera; the reference
/// mask that measured segmentations are scored against.
pub fn render_ground_truth_mask(
    scene: &Scene,
    cam: &CameraModel,
    resolution: (u32, u32),
) -> Result<crate::seg::SegmentationMask, PhantomError> {
    let cam = scaled_camera(cam, resolution)?;
    let surfaces = scene.surfaces();
    let caster = Raycaster::new(&surfaces);
    let cam_to_world = cam.pose.inverse();
    let origin = cam_to_world.apply(&Point3::ORIGIN);
    let (w, h) = resolution;
    let classes: Vec<TissueClass> = (0..w as u64 * h as u64)
        .into_par_iter()
        .map(|i| {
            let x = (i % w as u64) as f64;
            let y = (i / w as u64) as f64;
            let dir_cam = cam.pixel_ray(x + 0.5, y + 0.5);
            let dir = cam_to_world.apply_vec(&dir_cam);
            match caster.cast(&origin, &dir) {
                Some(hit) if hit.class == TissueClass::Tumor => TissueClass::Tumor,
                Some(_) => TissueClass::Healthy,
                None => TissueClass::Background,
            }
        })
        .collect();
    crate::seg::SegmentationMask::new(w, h, classes)
        .map_err(|e| PhantomError::InvalidDyeModel(format!("mask assembly failed: {e}")))
}

/// Camera with intrinsics rescaled proportionally to the target resolution.
fn scaled_camera(cam: &CameraModel, resolution: (u32, u32)) -> Result<CameraModel, PhantomError> {
    let (w, h) = resolution;
    if w == cam.width && h == cam.height {
        return Ok(cam.clone());
    }
    let sx = w as f64 / cam.width as f64;
    let sy = h as f64 / cam.height as f64;
    CameraModel::new(
        cam.fx * sx,
        cam.fy * sy,
        cam.cx * sx,
        cam.cy * sy,
        w,
        h,
        cam.pose,
    )
    .map_err(|e| PhantomError::InvalidDyeModel(format!("camera rescale failed: {e}")))
}

/// Standard normal deviate that depends only on (seed, index).
pub(crate) fn pixel_gauss(seed: u64, index: u64) -> f64 {
    let s = splitmix64(seed ^ splitmix64(index.wrapping_add(0x517C_C1B7_2722_0A95)));
    let u1 = to_unit(splitmix64(s));
    let u2 = to_unit(splitmix64(s ^ 0x9E37_79B9_7F4A_7C15));
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in the open interval (0, 1).
fn to_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}
