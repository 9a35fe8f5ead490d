//! JSON config schemas for the subcommands.
//!
//! All configs reject unknown keys so that typos fail loudly instead of
//! silently falling back to defaults.

use crate::error::{input, CliError};
use scene4d::alignment::AlignmentConfig;
use scene4d::geometry::CameraIntrinsics;
use scene4d::geometry::RigidTransform;
use scene4d::rendering::RemovalBox;
use scene4d::synth_oracle::SynthSpec;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use std::path::{Path, PathBuf};

/// Settings for `build`. Paths given on the command line win over paths
/// given here.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobConfig {
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub alignment: AlignmentConfig,
    /// Lift every Nth pixel in each direction.
    pub lift_stride: u32,
    /// Per-frame voxel downsample edge in meters; 0 keeps every point.
    pub voxel: f64,
    /// Optional removal-box file applied to the scene before saving.
    pub removal_boxes: Option<PathBuf>,
}

impl Default for JobConfig {
    fn default() -> Self {
        JobConfig {
            manifest: None,
            output_dir: None,
            alignment: AlignmentConfig::default(),
            lift_stride: 1,
            voxel: 0.1,
            removal_boxes: None,
        }
    }
}

impl JobConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.lift_stride == 0 {
            return Err(CliError::Input("lift_stride must be at least 1".into()));
        }
        if !(self.voxel.is_finite() && self.voxel >= 0.0) {
            return Err(CliError::Input(format!(
                "voxel {} must be zero or a positive size in meters",
                self.voxel
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    FrozenTime,
    FrozenSpace,
    Free,
}

/// One rendering step. Which fields are required depends on the mode.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryStep {
    #[serde(default)]
    pub time: Option<u16>,
    #[serde(default)]
    pub pose_delta: Option<RigidTransform>,
}

/// Settings for `render`: a camera on the rig, a base frame, and an ordered
/// list of steps interpreted by mode.
///
/// `frozen_time` steps move the camera (`pose_delta`, expressed in the base
/// camera's local frame) while time stays at `base_frame`; `frozen_space`
/// steps change `time` while the camera stays at the base pose; `free`
/// steps set both.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub mode: TrajectoryMode,
    pub base_frame: u16,
    pub camera: String,
    #[serde(default)]
    pub intrinsics: Option<CameraIntrinsics>,
    #[serde(default)]
    pub splat_radius: u32,
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid =
            |step: usize, message: &str| -> Result<(), CliError> {
                Err(CliError::Input(format!(
                    "invalid trajectory: step {step} {message}"
                )))
            };
        if self.steps.is_empty() {
            return Err(CliError::Input(
                "invalid trajectory: needs at least one step".into(),
            ));
        }
        for (i, step) in self.steps.iter().enumerate() {
            match self.mode {
                TrajectoryMode::FrozenTime => {
                    if step.pose_delta.is_none() {
                        return invalid(i, "must carry pose_delta in frozen_time mode");
                    }
                    if step.time.is_some() {
                        return invalid(i, "must not carry time in frozen_time mode");
                    }
                }
                TrajectoryMode::FrozenSpace => {
                    if step.time.is_none() {
                        return invalid(i, "must carry time in frozen_space mode");
                    }
                    if step.pose_delta.is_some() {
                        return invalid(i, "must not carry pose_delta in frozen_space mode");
                    }
                }
                TrajectoryMode::Free => {
                    if step.time.is_none() || step.pose_delta.is_none() {
                        return invalid(i, "must carry both time and pose_delta in free mode");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Settings for `remove`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemovalConfig {
    pub boxes: Vec<RemovalBox>,
}

impl RemovalConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.boxes.is_empty() {
            return Err(CliError::Input("removal config lists no boxes".into()));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if b.half_extents.iter().any(|&h| !(h.is_finite() && h > 0.0)) {
                return Err(CliError::Input(format!(
                    "removal box {i} half extents {:?} must be positive",
                    b.half_extents
                )));
            }
            if !b.center.is_finite() || !b.yaw.is_finite() {
                return Err(CliError::Input(format!(
                    "removal box {i} has a non-finite center or yaw"
                )));
            }
            if b.frame_range.0 > b.frame_range.1 {
                return Err(CliError::Input(format!(
                    "removal box {i} frame range {:?} is reversed",
                    b.frame_range
                )));
            }
        }
        Ok(())
    }
}

/// Settings for `export-pairs`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub splat_radius: u32,
}

/// Settings for `eval`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub masked: bool,
}

/// Settings for `synth`: the scene spec plus an optional pose perturbation
/// applied to the written manifest.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthJob {
    pub spec: SynthSpec,
    #[serde(default)]
    pub perturb: Option<PerturbSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    pub rot_deg: f64,
    pub trans_m: f64,
    /// Defaults to the scene spec's seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.rot_deg.is_finite() && self.rot_deg >= 0.0) {
            return Err(CliError::Input(format!(
                "perturb rot_deg {} must be non-negative",
                self.rot_deg
            )));
        }
        if !(self.trans_m.is_finite() && self.trans_m >= 0.0) {
            return Err(CliError::Input(format!(
                "perturb trans_m {} must be non-negative",
                self.trans_m
            )));
        }
        Ok(())
    }
}

/// Reads and parses a JSON config file; failures are input errors.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| input(format!("config {}: {e}", path.display())))
}
