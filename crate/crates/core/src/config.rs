//! Experiment configuration: one TOML file with a section per pipeline
//! stage. Everything the pipeline does is reproducible from the config
//! plus its seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{look_at_pose, CameraModel};
use crate::geometry::{Point3, Vec3};
use crate::phantom::{DyeModel, PhantomSpec};
use crate::planner::PlannerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: u32,
    pub height: u32,
    pub vertical_fov_deg: f64,
    pub eye: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Additive Gaussian noise along each depth ray (mm); depth camera
    /// only. Zero keeps the render perfect.
    pub depth_noise_std_mm: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        // 400 mm standoff above the tumor pole, looking straight down.
        Self {
            width: 320,
            height: 240,
            vertical_fov_deg: 40.0,
            eye: [0.0, 0.0, 430.0],
            look_at: [0.0, 0.0, 30.0],
            up: [0.0, 1.0, 0.0],
            depth_noise_std_mm: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn build(&self) -> Result<CameraModel, ConfigError> {
        let eye = Point3::new(self.eye[0], self.eye[1], self.eye[2]);
        let target = Point3::new(self.look_at[0], self.look_at[1], self.look_at[2]);
        if eye.distance(&target) < 1e-9 {
            return Err(ConfigError::Invalid("camera eye equals look_at".into()));
        }
        let up = Vec3::new(self.up[0], self.up[1], self.up[2]);
        let pose = look_at_pose(&eye, &target, &up);
        CameraModel::from_vertical_fov(
            self.vertical_fov_deg.to_radians(),
            self.width,
            self.height,
            pose,
        )
        .map_err(|e| ConfigError::Invalid(format!("camera: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CamerasConfig {
    pub depth: CameraConfig,
    pub nir: CameraConfig,
}

impl Default for CamerasConfig {
    fn default() -> Self {
        Self {
            depth: CameraConfig::default(),
            nir: CameraConfig {
                width: 1024,
                height: 544,
                vertical_fov_deg: 30.0,
                eye: [60.0, 0.0, 420.0],
                ..CameraConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Frame-graph edges taken from the true camera poses.
    Exact,
    /// The depth-to-NIR edge is estimated from simulated checkerboard
    /// correspondences with configurable corner noise.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub mode: CalibrationMode,
    /// Gaussian noise on simulated checkerboard corners (mm).
    pub corner_noise_std_mm: f64,
    /// Number of simulated checkerboard corners.
    pub corner_count: usize,
    /// Additional rotation error injected into the depth-to-NIR edge
    /// (degrees) for degradation studies.
    pub rotation_error_deg: f64,
    /// Additional translation error injected into the depth-to-NIR edge (mm).
    pub translation_error_mm: f64,
    /// Extra frame-graph edges beyond the standard depth/world/NIR chain.
    /// Redundant edges must agree with existing paths or the run fails.
    pub extra_edges: Vec<FrameEdgeConfig>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            mode: CalibrationMode::Exact,
            corner_noise_std_mm: 0.1,
            corner_count: 48,
            rotation_error_deg: 0.0,
            translation_error_mm: 0.0,
            extra_edges: Vec::new(),
        }
    }
}

/// One rigid frame-graph edge in axis-angle + translation form, mapping
/// `from`-frame points into the `to` frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEdgeConfig {
    pub from: String,
    pub to: String,
    pub translation_mm: [f64; 3],
    pub rotation_axis: [f64; 3],
    pub rotation_angle_deg: f64,
}

impl FrameEdgeConfig {
    pub fn build(&self) -> Result<crate::geometry::RigidTransform, ConfigError> {
        use crate::geometry::RigidTransform;
        let t = Vec3::new(
            self.translation_mm[0],
            self.translation_mm[1],
            self.translation_mm[2],
        );
        if self.rotation_angle_deg == 0.0 {
            return Ok(RigidTransform::from_translation(t));
        }
        let axis = Vec3::new(
            self.rotation_axis[0],
            self.rotation_axis[1],
            self.rotation_axis[2],
        );
        let rot = RigidTransform::from_axis_angle(axis, self.rotation_angle_deg.to_radians())
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "frame edge {} -> {}: rotation axis must be non-zero",
                    self.from, self.to
                ))
            })?;
        Ok(RigidTransform::from_translation(t).compose(&rot))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Fixed healthy threshold; absent means histogram-derived.
    pub healthy_threshold: Option<f64>,
    /// External segmentation mask (PGM with classes 0/1/2) replacing the
    /// built-in segmenter.
    pub external_mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    /// Proximity threshold for the 3D Dice score (mm).
    pub dsc3d_threshold_mm: f64,
    /// Electrocautery compensation added to measured distances (mm).
    pub tool_offset_mm: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            dsc3d_threshold_mm: 0.1,
            tool_offset_mm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub dye: DyeModel,
    pub cameras: CamerasConfig,
    pub calibration: CalibrationConfig,
    pub segmentation: SegmentationConfig,
    pub planner: PlannerConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "default".to_string(),
            seed: 1,
            phantom: PhantomSpec::default(),
            dye: DyeModel::default(),
            cameras: CamerasConfig::default(),
            calibration: CalibrationConfig::default(),
            segmentation: SegmentationConfig::default(),
            planner: PlannerConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Toml {
            path: path.display().to_string(),
            source: Box::new(e),
        })?;
        // Relative external-mask paths are relative to the config file.
        if let Some(mask) = &cfg.segmentation.external_mask {
            if mask.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.segmentation.external_mask = Some(dir.join(mask));
                }
            }
        }
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| ConfigError::Invalid(format!("serialize: {e}")))?;
        std::fs::write(path, text).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Full validation; run before any pipeline stage.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.phantom
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("phantom: {e}")))?;
        self.dye
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("dye: {e}")))?;
        for (name, cam) in [("depth", &self.cameras.depth), ("nir", &self.cameras.nir)] {
            if !(cam.vertical_fov_deg > 0.0 && cam.vertical_fov_deg < 180.0) {
                return Err(ConfigError::Invalid(format!(
                    "{name} camera fov must be in (0, 180) degrees"
                )));
            }
            if cam.width == 0 || cam.height == 0 {
                return Err(ConfigError::Invalid(format!(
                    "{name} camera resolution must be non-zero"
                )));
            }
            cam.build()?;
        }
        if !(self.planner.margin_mm > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "margin must be positive, got {}",
                self.planner.margin_mm
            )));
        }
        if !(self.planner.speed_mm_s > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "tool speed must be positive, got {}",
                self.planner.speed_mm_s
            )));
        }
        if !(self.planner.max_step_mm > 0.0) {
            return Err(ConfigError::Invalid("max step must be positive".into()));
        }
        if let Some(r) = self.planner.ball_radius_mm {
            if !(r > 0.0) {
                return Err(ConfigError::Invalid("ball radius must be positive".into()));
            }
        }
        if !(self.evaluation.dsc3d_threshold_mm > 0.0) {
            return Err(ConfigError::Invalid(
                "dsc3d threshold must be positive".into(),
            ));
        }
        if self.evaluation.tool_offset_mm < 0.0 {
            return Err(ConfigError::Invalid(
                "tool offset must be non-negative".into(),
            ));
        }
        if self.calibration.corner_count < 3 {
            return Err(ConfigError::Invalid(
                "calibration needs at least 3 corners".into(),
            ));
        }
        for edge in &self.calibration.extra_edges {
            edge.build()?;
            if edge.from == edge.to {
                return Err(ConfigError::Invalid(format!(
                    "frame edge {} -> {} is a self-loop",
                    edge.from, edge.to
                )));
            }
        }
        if let Some(mask) = &self.segmentation.external_mask {
            if !mask.exists() {
                return Err(ConfigError::Invalid(format!(
                    "external mask {} does not exist",
                    mask.display()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        cfg.save(&path).unwrap();
        let reread = ExperimentConfig::load(&path).unwrap();
        assert_eq!(reread, cfg);
    }

    #[test]
    fn zero_margin_is_invalid() {
        let mut cfg = ExperimentConfig::default();
        cfg.planner.margin_mm = 0.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_mask_file_is_invalid() {
        let mut cfg = ExperimentConfig::default();
        cfg.segmentation.external_mask = Some(PathBuf::from("/nonexistent/mask.pgm"));
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("partial.toml");
        std::fs::write(
            &path,
            "name = \"partial\"\nseed = 7\n[planner]\nmargin_mm = 4.0\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.planner.margin_mm, 4.0);
        assert_eq!(cfg.planner.speed_mm_s, 2.0);
        cfg.validate().unwrap();
    }
}
