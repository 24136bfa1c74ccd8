//! Margin labeling: every healthy point within the closed margin ball of
//! any tumor point becomes a margin point.

use crate::cloud::{LabeledPointCloud, TissueClass};
use crate::geometry::SpatialIndex;

use super::{MarginSet, PlanError};

pub fn find_margin(
    cloud: &mut LabeledPointCloud,
    margin_mm: f64,
) -> Result<MarginSet, PlanError> {
    if !(margin_mm > 0.0) {
        return Err(PlanError::NonPositiveMargin(margin_mm));
    }
    let tumor_points: Vec<_> = cloud.points_with_label(TissueClass::Tumor);
    if tumor_points.is_empty() {
        return Err(PlanError::NoTumorPoints);
    }
    let healthy: Vec<usize> = cloud.indices_with_label(TissueClass::Healthy);
    if healthy.is_empty() {
        return Err(PlanError::NoHealthyPoints);
    }
    let tumor_index = SpatialIndex::new(tumor_points);
    let mut indices = Vec::new();
    for i in healthy {
        let d = tumor_index
            .nearest_distance(&cloud.points()[i])
            .expect("non-empty tumor index");
        if d <= margin_mm {
            indices.push(i);
        }
    }
    for &i in &indices {
        cloud.labels_mut()[i] = TissueClass::Margin;
    }
    Ok(MarginSet { indices, margin_mm })
}
