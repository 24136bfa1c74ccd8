//! Evaluation suite: Hausdorff distances, signal-to-background ratio,
//! Dice similarity in 2D (pixel labels) and 3D (proximity-matched point
//! sets), and incision margin-error statistics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::TissueClass;
use crate::geometry::{Point3, SpatialIndex};
use crate::img::IntensityImage;
use crate::seg::SegmentationMask;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("point set '{0}' is empty")]
    EmptySet(&'static str),
    #[error("masks have different dimensions: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("target and background regions overlap")]
    OverlappingRegions,
    #[error("pixel region '{0}' is empty or references invalid pixels")]
    BadRegion(&'static str),
    #[error("background mean is zero; SBR is undefined")]
    UndefinedSbr,
    #[error("proximity threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
}

/// Directed Hausdorff distance: the largest distance from a point in `a`
/// to its nearest neighbor in `b`.
pub fn directed_hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptySet("A"));
    }
    if b.is_empty() {
        return Err(MetricError::EmptySet("B"));
    }
    let idx = SpatialIndex::new(b.to_vec());
    let mut worst = 0.0f64;
    for p in a {
        let d = idx.nearest_distance(p).expect("non-empty index");
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

/// Symmetric Hausdorff distance: the max of both directed distances.
pub fn hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64, MetricError> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// Signal-to-background ratio: mean target intensity over mean background
/// intensity. Regions must be non-empty, disjoint, and fully valid.
pub fn sbr(
    img: &IntensityImage,
    target: &[(u32, u32)],
    background: &[(u32, u32)],
) -> Result<f64, MetricError> {
    if target.is_empty() {
        return Err(MetricError::BadRegion("target"));
    }
    if background.is_empty() {
        return Err(MetricError::BadRegion("background"));
    }
    let target_set: HashSet<(u32, u32)> = target.iter().copied().collect();
    if background.iter().any(|p| target_set.contains(p)) {
        return Err(MetricError::OverlappingRegions);
    }
    let mu_target = img
        .region_mean(target)
        .ok_or(MetricError::BadRegion("target"))?;
    let mu_background = img
        .region_mean(background)
        .ok_or(MetricError::BadRegion("background"))?;
    if mu_background == 0.0 {
        return Err(MetricError::UndefinedSbr);
    }
    Ok(mu_target / mu_background)
}

/// Per-class Dice scores for a mask pair plus a label-weighted mean
/// (weights proportional to the class's combined pixel count).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dsc2dReport {
    pub background: f64,
    pub healthy: f64,
    pub tumor: f64,
    pub weighted_mean: f64,
}

/// Dice score of one class between two masks. Empty-in-both counts as
/// perfect agreement (1.0).
pub fn dsc_2d_class(
    x: &SegmentationMask,
    y: &SegmentationMask,
    class: TissueClass,
) -> Result<f64, MetricError> {
    check_dims(x, y)?;
    let mut intersection = 0usize;
    let mut nx = 0usize;
    let mut ny = 0usize;
    for (cx, cy) in x.classes().iter().zip(y.classes()) {
        let in_x = *cx == class;
        let in_y = *cy == class;
        nx += in_x as usize;
        ny += in_y as usize;
        intersection += (in_x && in_y) as usize;
    }
    if nx + ny == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * intersection as f64 / (nx + ny) as f64)
}

pub fn dsc_2d(x: &SegmentationMask, y: &SegmentationMask) -> Result<Dsc2dReport, MetricError> {
    check_dims(x, y)?;
    let classes = [
        TissueClass::Background,
        TissueClass::Healthy,
        TissueClass::Tumor,
    ];
    let mut scores = [0.0f64; 3];
    let mut weights = [0.0f64; 3];
    for (i, &c) in classes.iter().enumerate() {
        scores[i] = dsc_2d_class(x, y, c)?;
        weights[i] = (x.count(c) + y.count(c)) as f64;
    }
    let wsum: f64 = weights.iter().sum();
    let weighted_mean = if wsum > 0.0 {
        scores
            .iter()
            .zip(&weights)
            .map(|(s, w)| s * w)
            .sum::<f64>()
            / wsum
    } else {
        1.0
    };
    Ok(Dsc2dReport {
        background: scores[0],
        healthy: scores[1],
        tumor: scores[2],
        weighted_mean,
    })
}

fn check_dims(x: &SegmentationMask, y: &SegmentationMask) -> Result<(), MetricError> {
    if x.width() != y.width() || x.height() != y.height() {
        return Err(MetricError::DimensionMismatch(
            x.width(),
            x.height(),
            y.width(),
            y.height(),
        ));
    }
    Ok(())
}

/// 3D Dice score under a proximity threshold: points match when strictly
/// closer than `threshold`, matching is one-to-one greedy mutual-nearest,
/// and the score is `2 * matches / (|X| + |Y|)`.
pub fn dsc_3d(x: &[Point3], y: &[Point3], threshold: f64) -> Result<f64, MetricError> {
    if !(threshold > 0.0) {
        return Err(MetricError::NonPositiveThreshold(threshold));
    }
    if x.is_empty() && y.is_empty() {
        return Ok(1.0);
    }
    if x.is_empty() || y.is_empty() {
        return Ok(0.0);
    }
    let matches = mutual_nearest_matches(x, y, threshold);
    Ok(2.0 * matches as f64 / (x.len() + y.len()) as f64)
}

/// Rounds of mutual-nearest-neighbor matching: in each round, pairs that
/// are each other's nearest unmatched counterpart (strictly inside the
/// threshold) are matched and removed. Ties break on the lowest index.
fn mutual_nearest_matches(x: &[Point3], y: &[Point3], threshold: f64) -> usize {
    let mut active_x: Vec<usize> = (0..x.len()).collect();
    let mut active_y: Vec<usize> = (0..y.len()).collect();
    let mut matches = 0usize;
    while !active_x.is_empty() && !active_y.is_empty() {
        let idx_y = SpatialIndex::new(active_y.iter().map(|&i| y[i]).collect());
        let idx_x = SpatialIndex::new(active_x.iter().map(|&i| x[i]).collect());
        // Nearest active y for each active x, and vice versa.
        let mut matched_pairs: Vec<(usize, usize)> = Vec::new();
        for (xi_local, &xi) in active_x.iter().enumerate() {
            let (yj_local, d) = idx_y.nearest(&x[xi]).expect("non-empty");
            if d >= threshold {
                continue;
            }
            let (back, d_back) = idx_x.nearest(&y[active_y[yj_local]]).expect("non-empty");
            if back == xi_local && d_back < threshold {
                matched_pairs.push((xi_local, yj_local));
            }
        }
        if matched_pairs.is_empty() {
            break;
        }
        matches += matched_pairs.len();
        let used_x: HashSet<usize> = matched_pairs.iter().map(|&(a, _)| a).collect();
        let used_y: HashSet<usize> = matched_pairs.iter().map(|&(_, b)| b).collect();
        active_x = active_x
            .iter()
            .enumerate()
            .filter(|(local, _)| !used_x.contains(local))
            .map(|(_, &i)| i)
            .collect();
        active_y = active_y
            .iter()
            .enumerate()
            .filter(|(local, _)| !used_y.contains(local))
            .map(|(_, &i)| i)
            .collect();
    }
    matches
}

/// Signed distance-to-margin statistics for an executed or planned
/// incision against the tumor point set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginErrorReport {
    /// Per-point signed error: `(nearest tumor distance + tool offset) -
    /// margin`. Positive means the cut ran farther from the tumor than
    /// desired, negative means closer.
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub mean_abs: f64,
    pub margin_mm: f64,
    pub tool_offset_mm: f64,
}

/// Per-point margin error of `incision` relative to `tumor`. The tool
/// offset widens each measured distance to account for the instrument
/// radius before comparing against the desired margin.
pub fn margin_error(
    incision: &[Point3],
    tumor: &[Point3],
    margin_mm: f64,
    tool_offset_mm: f64,
) -> Result<MarginErrorReport, MetricError> {
    if incision.is_empty() {
        return Err(MetricError::EmptySet("incision"));
    }
    if tumor.is_empty() {
        return Err(MetricError::EmptySet("tumor"));
    }
    let idx = SpatialIndex::new(tumor.to_vec());
    let errors: Vec<f64> = incision
        .iter()
        .map(|p| {
            let d = idx.nearest_distance(p).expect("non-empty index");
            (d + tool_offset_mm) - margin_mm
        })
        .collect();
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let mean_abs = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
    Ok(MarginErrorReport {
        errors,
        mean,
        std: var.sqrt(),
        mean_abs,
        margin_mm,
        tool_offset_mm,
    })
}
