//! The labeled point cloud is the fabric every pipeline stage works on:
//! observed 3D points with a tissue class per point, plus hidden
//! ground-truth classes carried along for evaluation only.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;

/// Tissue classification of a pixel or a 3D point.
///
/// `Margin` is only ever produced by the planner; segmentation emits the
/// first three classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TissueClass {
    Background,
    Healthy,
    Tumor,
    Margin,
}

impl TissueClass {
    /// Stable integer encoding used by the PGM/PLY formats.
    pub fn code(self) -> u16 {
        match self {
            TissueClass::Background => 0,
            TissueClass::Healthy => 1,
            TissueClass::Tumor => 2,
            TissueClass::Margin => 3,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(TissueClass::Background),
            1 => Some(TissueClass::Healthy),
            2 => Some(TissueClass::Tumor),
            3 => Some(TissueClass::Margin),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("label count {labels} does not match point count {points}")]
    LabelCountMismatch { labels: usize, points: usize },
    #[error("ground-truth label count {labels} does not match point count {points}")]
    TruthCountMismatch { labels: usize, points: usize },
}

/// 3D points in a named frame with per-point tissue classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub frame: String,
    points: Vec<Point3>,
    labels: Vec<TissueClass>,
    /// Renderer-known classes, hidden from the pipeline, used by metrics.
    ground_truth: Option<Vec<TissueClass>>,
}

impl LabeledPointCloud {
    pub fn new(
        frame: impl Into<String>,
        points: Vec<Point3>,
        labels: Vec<TissueClass>,
    ) -> Result<Self, CloudError> {
        if labels.len() != points.len() {
            return Err(CloudError::LabelCountMismatch {
                labels: labels.len(),
                points: points.len(),
            });
        }
        Ok(Self {
            frame: frame.into(),
            points,
            labels,
            ground_truth: None,
        })
    }

    /// A cloud whose points all carry the same label (typically Background,
    /// before segmentation labels are transferred).
    pub fn unlabeled(frame: impl Into<String>, points: Vec<Point3>) -> Self {
        let labels = vec![TissueClass::Background; points.len()];
        Self {
            frame: frame.into(),
            points,
            labels,
            ground_truth: None,
        }
    }

    pub fn with_ground_truth(mut self, truth: Vec<TissueClass>) -> Result<Self, CloudError> {
        if truth.len() != self.points.len() {
            return Err(CloudError::TruthCountMismatch {
                labels: truth.len(),
                points: self.points.len(),
            });
        }
        self.ground_truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[TissueClass] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [TissueClass] {
        &mut self.labels
    }

    pub fn ground_truth(&self) -> Option<&[TissueClass]> {
        self.ground_truth.as_deref()
    }

    /// Points carrying the given (predicted) label.
    pub fn points_with_label(&self, class: TissueClass) -> Vec<Point3> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == class)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Indices of points carrying the given (predicted) label.
    pub fn indices_with_label(&self, class: TissueClass) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// The same cloud expressed in another frame.
    pub fn transformed(
        &self,
        transform: &crate::geometry::RigidTransform,
        frame: impl Into<String>,
    ) -> Self {
        Self {
            frame: frame.into(),
            points: self.points.iter().map(|p| transform.apply(p)).collect(),
            labels: self.labels.clone(),
            ground_truth: self.ground_truth.clone(),
        }
    }

    /// Points whose hidden ground-truth class matches, when truth is present.
    pub fn ground_truth_points(&self, class: TissueClass) -> Vec<Point3> {
        match &self.ground_truth {
            Some(truth) => self
                .points
                .iter()
                .zip(truth)
                .filter(|(_, &l)| l == class)
                .map(|(p, _)| *p)
                .collect(),
            None => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_codes_round_trip() {
        for class in [
            TissueClass::Background,
            TissueClass::Healthy,
            TissueClass::Tumor,
            TissueClass::Margin,
        ] {
            assert_eq!(TissueClass::from_code(class.code()), Some(class));
        }
        assert_eq!(TissueClass::from_code(7), None);
    }

    #[test]
    fn label_length_mismatch_rejected() {
        let r = LabeledPointCloud::new("depth", vec![Point3::ORIGIN], vec![]);
        assert!(matches!(r, Err(CloudError::LabelCountMismatch { .. })));
    }
}
