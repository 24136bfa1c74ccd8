//! NIR image segmentation and label transfer onto the depth cloud.
//!
//! The segmenter exploits negative staining directly: healthy tissue is
//! bright, so pixels at or above a threshold are healthy; connected dark
//! regions fully enclosed by healthy tissue are tumor; everything else is
//! background. Enclosure is decided by flood fill over non-healthy pixels
//! from the image border, so a one-pixel breach in the bright annulus
//! demotes the dark interior to background.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::Projection;
use crate::cloud::{LabeledPointCloud, TissueClass};
use crate::img::IntensityImage;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("no pixels reach the healthy threshold; no kidney found in the image")]
    NoKidneyFound,
    #[error("image intensity histogram is degenerate (uniform image)")]
    DegenerateHistogram,
    #[error("projection list length {projections} does not match cloud size {points}")]
    AlignmentError { projections: usize, points: usize },
    #[error("mask is {mask_w}x{mask_h} but the image is {img_w}x{img_h}")]
    DimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        img_w: u32,
        img_h: u32,
    },
    #[error("class code {0} is not a valid segmentation class")]
    InvalidClassCode(u16),
}

/// Per-pixel segmentation into background / healthy / tumor.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    classes: Vec<TissueClass>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, classes: Vec<TissueClass>) -> Result<Self, SegError> {
        if classes.len() != width as usize * height as usize {
            return Err(SegError::DimensionMismatch {
                mask_w: width,
                mask_h: height,
                img_w: width,
                img_h: (classes.len() / width.max(1) as usize) as u32,
            });
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> TissueClass {
        self.classes[y as usize * self.width as usize + x as usize]
    }

    pub fn classes(&self) -> &[TissueClass] {
        &self.classes
    }

    pub fn count(&self, class: TissueClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    /// Pixel coordinates carrying the given class, row-major order.
    pub fn pixels_of(&self, class: TissueClass) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) == class {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Segmentation thresholds. Without an explicit healthy threshold the
/// split is derived from the intensity histogram (two-class
/// variance-maximizing split); tumor is resolved by enclosure either way.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SegParams {
    pub healthy_threshold: Option<f64>,
}

pub fn segment_nir(img: &IntensityImage, params: &SegParams) -> Result<SegmentationMask, SegError> {
    let threshold = match params.healthy_threshold {
        Some(t) => t,
        None => otsu_threshold(img)?,
    };
    let (w, h) = (img.width(), img.height());
    let mut healthy = vec![false; w as usize * h as usize];
    let mut any_healthy = false;
    for y in 0..h {
        for x in 0..w {
            let bright = matches!(img.get(x, y), Some(v) if v >= threshold);
            healthy[(y * w + x) as usize] = bright;
            any_healthy |= bright;
        }
    }
    if !any_healthy {
        return Err(SegError::NoKidneyFound);
    }

    // Flood fill the non-healthy region from the border (4-connectivity);
    // unreached dark pixels are enclosed by healthy tissue, hence tumor.
    let mut border_dark = vec![false; w as usize * h as usize];
    let mut stack = Vec::new();
    for x in 0..w {
        for y in [0, h - 1] {
            let i = (y * w + x) as usize;
            if !healthy[i] && !border_dark[i] {
                border_dark[i] = true;
                stack.push((x, y));
            }
        }
    }
    for y in 0..h {
        for x in [0, w - 1] {
            let i = (y * w + x) as usize;
            if !healthy[i] && !border_dark[i] {
                border_dark[i] = true;
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        let mut visit = |nx: u32, ny: u32| {
            let i = (ny * w + nx) as usize;
            if !healthy[i] && !border_dark[i] {
                border_dark[i] = true;
                stack.push((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }

    let classes: Vec<TissueClass> = (0..w as usize * h as usize)
        .map(|i| {
            if healthy[i] {
                TissueClass::Healthy
            } else if border_dark[i] {
                TissueClass::Background
            } else {
                TissueClass::Tumor
            }
        })
        .collect();
    SegmentationMask::new(w, h, classes)
}

/// Two-class variance-maximizing histogram split (Otsu) over valid pixels,
/// returned as an intensity threshold.
fn otsu_threshold(img: &IntensityImage) -> Result<f64, SegError> {
    const BINS: usize = 256;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut n = 0usize;
    for (_, _, v) in img.iter_valid() {
        lo = lo.min(v);
        hi = hi.max(v);
        n += 1;
    }
    if n == 0 || !(hi > lo) {
        return Err(SegError::DegenerateHistogram);
    }
    let scale = BINS as f64 / (hi - lo);
    let mut hist = [0u64; BINS];
    for (_, _, v) in img.iter_valid() {
        let bin = (((v - lo) * scale) as usize).min(BINS - 1);
        hist[bin] += 1;
    }
    let total = n as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut best_bin = 0;
    let mut best_var = -1.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for (i, &c) in hist.iter().enumerate().take(BINS - 1) {
        w0 += c as f64;
        sum0 += i as f64 * c as f64;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_sum - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best_var {
            best_var = between;
            best_bin = i;
        }
    }
    // Threshold at the upper edge of the best split bin.
    Ok(lo + (best_bin as f64 + 1.0) / scale)
}

/// Transfers mask classes onto cloud points through their projections.
/// In-bounds points take the class of the pixel containing the projection
/// (floor); behind-camera and out-of-bounds points become background.
pub fn label_cloud(
    cloud: &LabeledPointCloud,
    projections: &[Projection],
    mask: &SegmentationMask,
) -> Result<LabeledPointCloud, SegError> {
    if projections.len() != cloud.len() {
        return Err(SegError::AlignmentError {
            projections: projections.len(),
            points: cloud.len(),
        });
    }
    let mut labeled = cloud.clone();
    for (label, proj) in labeled.labels_mut().iter_mut().zip(projections) {
        *label = match proj {
            Projection::InImage { u, v, .. } => {
                let x = (u.floor() as i64).clamp(0, mask.width() as i64 - 1) as u32;
                let y = (v.floor() as i64).clamp(0, mask.height() as i64 - 1) as u32;
                mask.get(x, y)
            }
            Projection::OutOfBounds { .. } | Projection::BehindCamera => TissueClass::Background,
        };
    }
    Ok(labeled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_from_fn(w: u32, h: u32, f: impl Fn(u32, u32) -> f64) -> IntensityImage {
        let mut values = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                values.push(f(x, y));
            }
        }
        IntensityImage::from_values(w, h, values).unwrap()
    }

    /// Bright annulus (healthy) around a dark disk (tumor) on a dark
    /// background, with an optional 1-pixel slit breaching the annulus.
    fn annulus_image(gap: bool) -> IntensityImage {
        image_from_fn(41, 41, |x, y| {
            let dx = x as f64 - 20.0;
            let dy = y as f64 - 20.0;
            let r = (dx * dx + dy * dy).sqrt();
            if gap && y == 20 && x > 20 {
                return 10.0; // dark slit from the disk to the border
            }
            if r < 6.0 {
                10.0 // dark disk
            } else if r < 15.0 {
                100.0 // bright annulus
            } else {
                10.0 // dark background
            }
        })
    }

    #[test]
    fn enclosed_dark_disk_is_tumor() {
        let mask = segment_nir(&annulus_image(false), &SegParams::default()).unwrap();
        assert_eq!(mask.get(20, 20), TissueClass::Tumor);
        assert_eq!(mask.get(20, 10), TissueClass::Healthy);
        assert_eq!(mask.get(0, 0), TissueClass::Background);
        assert!(mask.count(TissueClass::Tumor) > 50);
    }

    #[test]
    fn breached_annulus_demotes_disk_to_background() {
        let mask = segment_nir(&annulus_image(true), &SegParams::default()).unwrap();
        assert_eq!(mask.get(20, 20), TissueClass::Background);
        assert_eq!(mask.count(TissueClass::Tumor), 0);
    }

    #[test]
    fn dark_blob_without_enclosure_is_background() {
        // Bright half-plane and a dark blob inside the dark half: the blob
        // connects to the border, so it stays background.
        let img = image_from_fn(30, 30, |x, _| if x < 15 { 100.0 } else { 10.0 });
        let mask = segment_nir(&img, &SegParams::default()).unwrap();
        assert_eq!(mask.get(20, 15), TissueClass::Background);
        assert_eq!(mask.get(5, 15), TissueClass::Healthy);
        assert_eq!(mask.count(TissueClass::Tumor), 0);
    }

    #[test]
    fn uniform_image_is_an_error() {
        let img = image_from_fn(16, 16, |_, _| 42.0);
        assert!(matches!(
            segment_nir(&img, &SegParams::default()),
            Err(SegError::DegenerateHistogram)
        ));
        // Explicit threshold above every pixel: no kidney found.
        let params = SegParams {
            healthy_threshold: Some(100.0),
        };
        assert!(matches!(
            segment_nir(&img, &params),
            Err(SegError::NoKidneyFound)
        ));
    }

    #[test]
    fn mask_is_complete() {
        let mask = segment_nir(&annulus_image(false), &SegParams::default()).unwrap();
        let total = mask.count(TissueClass::Background)
            + mask.count(TissueClass::Healthy)
            + mask.count(TissueClass::Tumor);
        assert_eq!(total, 41 * 41);
    }

    mod labeling {
        use super::*;
        use crate::geometry::Point3;

        fn mask_halves() -> SegmentationMask {
            // Left half healthy, right half tumor.
            let mut classes = Vec::new();
            for _y in 0..4u32 {
                for x in 0..8u32 {
                    classes.push(if x < 4 {
                        TissueClass::Healthy
                    } else {
                        TissueClass::Tumor
                    });
                }
            }
            SegmentationMask::new(8, 4, classes).unwrap()
        }

        #[test]
        fn in_bounds_points_take_pixel_class() {
            let cloud = LabeledPointCloud::unlabeled(
                "world",
                vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)],
            );
            let projections = vec![
                Projection::InImage {
                    u: 1.2,
                    v: 2.9,
                    depth: 100.0,
                },
                Projection::InImage {
                    u: 6.0,
                    v: 0.0,
                    depth: 100.0,
                },
            ];
            let labeled = label_cloud(&cloud, &projections, &mask_halves()).unwrap();
            assert_eq!(labeled.labels()[0], TissueClass::Healthy);
            assert_eq!(labeled.labels()[1], TissueClass::Tumor);
        }

        #[test]
        fn pixel_boundary_takes_floor_pixel() {
            // u = 4.0 exactly: floor -> pixel 4, the tumor side.
            let cloud = LabeledPointCloud::unlabeled("world", vec![Point3::ORIGIN]);
            let projections = vec![Projection::InImage {
                u: 4.0,
                v: 1.0,
                depth: 50.0,
            }];
            let labeled = label_cloud(&cloud, &projections, &mask_halves()).unwrap();
            assert_eq!(labeled.labels()[0], TissueClass::Tumor);
        }

        #[test]
        fn out_of_view_points_become_background() {
            let cloud = LabeledPointCloud::unlabeled(
                "world",
                vec![Point3::ORIGIN, Point3::new(1.0, 0.0, 0.0)],
            );
            let projections = vec![
                Projection::OutOfBounds {
                    u: -3.0,
                    v: 1.0,
                    depth: 100.0,
                },
                Projection::BehindCamera,
            ];
            let labeled = label_cloud(&cloud, &projections, &mask_halves()).unwrap();
            assert!(labeled
                .labels()
                .iter()
                .all(|&c| c == TissueClass::Background));
        }

        #[test]
        fn misaligned_projection_list_rejected() {
            let cloud = LabeledPointCloud::unlabeled("world", vec![Point3::ORIGIN]);
            assert!(matches!(
                label_cloud(&cloud, &[], &mask_halves()),
                Err(SegError::AlignmentError { .. })
            ));
        }

        #[test]
        fn label_transfer_commutes_with_permutation() {
            let pts = vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ];
            let projs = vec![
                Projection::InImage {
                    u: 0.5,
                    v: 0.5,
                    depth: 1.0,
                },
                Projection::InImage {
                    u: 6.5,
                    v: 0.5,
                    depth: 1.0,
                },
                Projection::BehindCamera,
            ];
            let mask = mask_halves();
            let cloud = LabeledPointCloud::unlabeled("world", pts.clone());
            let base = label_cloud(&cloud, &projs, &mask).unwrap();

            let perm = [2usize, 0, 1];
            let pts_p: Vec<Point3> = perm.iter().map(|&i| pts[i]).collect();
            let projs_p: Vec<Projection> = perm.iter().map(|&i| projs[i]).collect();
            let cloud_p = LabeledPointCloud::unlabeled("world", pts_p);
            let labeled_p = label_cloud(&cloud_p, &projs_p, &mask).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                assert_eq!(labeled_p.labels()[k], base.labels()[i]);
            }
        }
    }
}
