//! Synthetic kidney/tumor scenes and the virtual sensor rig that images
//! them. The kidney is a tessellated ellipsoid; the tumor is a sphere-cap
//! bump protruding from its surface (exophytic). Scenes render through
//! ideal pinhole cameras into a depth point cloud and an NIR intensity
//! image with negative-staining contrast: healthy tissue glows in
//! proportion to dye concentration, tumor tissue stays dark.

mod generate;
mod raycast;
mod render;

pub use generate::generate_phantom;
pub use raycast::{Hit, Raycaster};
pub use render::{
    render_depth_cloud, render_depth_image, render_ground_truth_mask, render_nir_image,
    DepthRenderOptions,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::TissueClass;
use crate::geometry::{Point3, TriangleMesh};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("kidney semi-axes must be positive, got {0:?}")]
    NonPositiveSemiAxes([f64; 3]),
    #[error("tumor radius {radius} mm must be positive and smaller than the smallest kidney semi-axis {min_axis} mm")]
    TumorRadiusTooLarge { radius: f64, min_axis: f64 },
    #[error("protrusion fraction must lie in (0, 1], got {0}")]
    ProtrusionOutOfRange(f64),
    #[error("dye concentration must lie in [0, 0.05] (w/w), got {0}")]
    ConcentrationOutOfRange(f64),
    #[error("tessellation density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("dye model invalid: {0}")]
    InvalidDyeModel(String),
    #[error("scene is not exophytic: tumor does not pierce the kidney surface")]
    NotExophytic,
    #[error("no scene surface is visible from the camera; rendered cloud is empty")]
    EmptyRender,
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Parameters describing one synthetic kidney/tumor phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    /// Ellipsoid semi-axes in mm.
    pub kidney_semi_axes: [f64; 3],
    /// Polar angle (radians from +z) of the tumor anchor on the kidney.
    pub tumor_polar_angle: f64,
    /// Azimuth (radians) of the tumor anchor.
    pub tumor_azimuth: f64,
    /// Tumor sphere radius in mm.
    pub tumor_radius: f64,
    /// Fraction of the tumor radius protruding above the kidney surface,
    /// in (0, 1]. 1.0 exposes a full hemisphere.
    pub protrusion: f64,
    /// NIR dye concentration (w/w fraction) mixed into healthy tissue.
    pub dye_concentration: f64,
    /// Surface tessellation density in vertices per mm^2.
    pub tessellation_density: f64,
    /// Seed for the tessellation jitter.
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kidney_semi_axes: [55.0, 35.0, 30.0],
            tumor_polar_angle: 0.0,
            tumor_azimuth: 0.0,
            tumor_radius: 15.0,
            protrusion: 0.7,
            dye_concentration: 0.0038,
            tessellation_density: 0.35,
            seed: 1,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<(), PhantomError> {
        if self.kidney_semi_axes.iter().any(|&a| !(a > 0.0)) {
            return Err(PhantomError::NonPositiveSemiAxes(self.kidney_semi_axes));
        }
        let min_axis = self
            .kidney_semi_axes
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(self.tumor_radius > 0.0) || self.tumor_radius >= min_axis {
            return Err(PhantomError::TumorRadiusTooLarge {
                radius: self.tumor_radius,
                min_axis,
            });
        }
        if !(self.protrusion > 0.0 && self.protrusion <= 1.0) {
            return Err(PhantomError::ProtrusionOutOfRange(self.protrusion));
        }
        if !(0.0..=0.05).contains(&self.dye_concentration) {
            return Err(PhantomError::ConcentrationOutOfRange(self.dye_concentration));
        }
        if !(self.tessellation_density > 0.0) {
            return Err(PhantomError::NonPositiveDensity(self.tessellation_density));
        }
        Ok(())
    }
}

/// A generated scene: two labeled surfaces plus bookkeeping for
/// ground-truth evaluation.
#[derive(Debug, Clone)]
pub struct Scene {
    pub kidney: TriangleMesh,
    pub tumor: TriangleMesh,
    pub kidney_classes: Vec<TissueClass>,
    pub tumor_classes: Vec<TissueClass>,
    pub dye_concentration: f64,
    pub tumor_center: Point3,
    pub tumor_radius: f64,
}

impl Scene {
    /// All tumor-class vertices across both surfaces; the ground-truth
    /// tumor point set used by the evaluation suite.
    pub fn ground_truth_tumor_points(&self) -> Vec<Point3> {
        let mut pts = Vec::new();
        for (v, c) in self.tumor.vertices().iter().zip(&self.tumor_classes) {
            if *c == TissueClass::Tumor {
                pts.push(*v);
            }
        }
        for (v, c) in self.kidney.vertices().iter().zip(&self.kidney_classes) {
            if *c == TissueClass::Tumor {
                pts.push(*v);
            }
        }
        pts
    }

    /// Surface list consumed by the ray caster.
    pub fn surfaces(&self) -> Vec<(&TriangleMesh, &[TissueClass])> {
        vec![
            (&self.kidney, self.kidney_classes.as_slice()),
            (&self.tumor, self.tumor_classes.as_slice()),
        ]
    }
}

/// Linear negative-staining emission model: healthy tissue emits
/// `(intercept + slope * concentration) * background_level`, tumor tissue
/// emits a fixed dark level, and empty pixels sit at the background level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DyeModel {
    /// Signal-to-background ratio gained per unit (w/w) concentration.
    pub slope: f64,
    /// Signal-to-background ratio at zero concentration.
    pub intercept: f64,
    /// Emission level of tumor tissue (radiometric units).
    pub tumor_level: f64,
    /// Emission level of empty background (radiometric units).
    pub background_level: f64,
    /// Multiplicative Gaussian noise std as a fraction of the signal.
    pub noise_std: f64,
}

impl Default for DyeModel {
    fn default() -> Self {
        Self {
            slope: 300.0,
            intercept: 5.2,
            tumor_level: 80.0,
            background_level: 100.0,
            noise_std: 0.02,
        }
    }
}

impl DyeModel {
    pub fn validate(&self) -> Result<(), PhantomError> {
        if !(self.slope > 0.0) {
            return Err(PhantomError::InvalidDyeModel(format!(
                "slope must be positive, got {}",
                self.slope
            )));
        }
        if !(self.intercept >= 0.0) {
            return Err(PhantomError::InvalidDyeModel(format!(
                "intercept must be non-negative, got {}",
                self.intercept
            )));
        }
        if !(self.background_level > 0.0) {
            return Err(PhantomError::InvalidDyeModel(format!(
                "background level must be positive, got {}",
                self.background_level
            )));
        }
        if !(self.tumor_level >= 0.0)
            || self.tumor_level > self.intercept * self.background_level
        {
            return Err(PhantomError::InvalidDyeModel(format!(
                "tumor level {} must lie in [0, intercept * background = {}] so tumor stays \
                 darker than healthy tissue at any positive concentration",
                self.tumor_level,
                self.intercept * self.background_level
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(PhantomError::InvalidDyeModel(format!(
                "noise std must be non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// Healthy-tissue emission at the given dye concentration.
    pub fn healthy_level(&self, concentration: f64) -> f64 {
        (self.intercept + self.slope * concentration) * self.background_level
    }

    /// Model-predicted signal-to-background ratio at a concentration.
    pub fn model_sbr(&self, concentration: f64) -> f64 {
        self.intercept + self.slope * concentration
    }

    /// Same model with the intercept adjusted so that the predicted SBR at
    /// `concentration` equals `sbr` exactly. Falls back to reducing the
    /// slope when the required intercept would be negative.
    pub fn with_target_sbr(mut self, sbr: f64, concentration: f64) -> Result<Self, PhantomError> {
        let intercept = sbr - self.slope * concentration;
        if intercept >= 0.0 {
            self.intercept = intercept;
        } else {
            self.slope = sbr / (2.0 * concentration);
            self.intercept = sbr / 2.0;
        }
        if self.tumor_level > self.intercept * self.background_level {
            self.tumor_level = self.intercept * self.background_level;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }
}
