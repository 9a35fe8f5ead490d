//! The processed-scene artifact: one directory holding everything a renderer
//! needs.
//!
//! ```text
//! <dir>/cloud.stg4      world-frame points, binary container
//! <dir>/scene.json      scene id, rig, per-frame timestamps and refined poses
//! <dir>/alignment.json  per-frame alignment reports
//! ```
//!
//! `scene.json` is the authority on which frames exist; the container only
//! stores points, so frames that ended up empty simply contribute no records.

use super::{load_cloud, save_cloud, SceneIoError};
use crate::alignment::{AlignmentReport, Scene4D};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::reconstruction::{FramePointCloud, FrameTag, RigCamera, RigConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CLOUD_FILE: &str = "cloud.stg4";
pub const SCENE_FILE: &str = "scene.json";
pub const ALIGNMENT_FILE: &str = "alignment.json";

/// A fully processed scene, ready to render or persist.
#[derive(Debug, Clone)]
pub struct SceneArtifact {
    pub scene_id: String,
    pub rig: RigConfig,
    pub scene: Scene4D,
}

#[derive(Serialize, Deserialize)]
struct SceneWire {
    scene_id: String,
    rig: Vec<RigCameraWire>,
    frames: Vec<FrameMetaWire>,
}

#[derive(Serialize, Deserialize)]
struct RigCameraWire {
    name: String,
    intrinsics: CameraIntrinsics,
    extrinsic: RigidTransform,
}

#[derive(Serialize, Deserialize)]
struct FrameMetaWire {
    index: u16,
    timestamp: f64,
    refined_pose: RigidTransform,
}

impl SceneArtifact {
    /// Writes the artifact directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<(), SceneIoError> {
        let n = self.scene.frames.len();
        if self.scene.refined_poses.len() != n || self.scene.reports.len() != n {
            return Err(SceneIoError::validation(format!(
                "scene lists {n} frames but {} poses and {} reports",
                self.scene.refined_poses.len(),
                self.scene.reports.len()
            )));
        }
        std::fs::create_dir_all(dir).map_err(|e| SceneIoError::io(dir, e))?;
        save_cloud(&self.scene.frames, &dir.join(CLOUD_FILE))?;
        let wire = SceneWire {
            scene_id: self.scene_id.clone(),
            rig: self
                .rig
                .cameras
                .iter()
                .map(|c| RigCameraWire {
                    name: c.name.clone(),
                    intrinsics: c.intrinsics,
                    extrinsic: c.cam_to_ego,
                })
                .collect(),
            frames: self
                .scene
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| FrameMetaWire {
                    index: f.frame_index,
                    timestamp: f.timestamp,
                    refined_pose: self.scene.refined_poses[i],
                })
                .collect(),
        };
        write_json(&dir.join(SCENE_FILE), &wire)?;
        write_json(&dir.join(ALIGNMENT_FILE), &self.scene.reports)
    }

    /// Reads an artifact directory written by [`SceneArtifact::save`].
    pub fn load(dir: &Path) -> Result<Self, SceneIoError> {
        let wire: SceneWire = read_json(&dir.join(SCENE_FILE))?;
        if wire.frames.is_empty() {
            return Err(SceneIoError::validation("scene.json lists no frames"));
        }
        for (position, frame) in wire.frames.iter().enumerate() {
            if usize::from(frame.index) != position {
                return Err(SceneIoError::validation(format!(
                    "scene.json frame at position {position} has index {}",
                    frame.index
                )));
            }
        }
        let reports: Vec<AlignmentReport> = read_json(&dir.join(ALIGNMENT_FILE))?;
        if reports.len() != wire.frames.len() {
            return Err(SceneIoError::validation(format!(
                "{} alignment reports for {} frames",
                reports.len(),
                wire.frames.len()
            )));
        }
        let mut frames: Vec<FramePointCloud> = wire
            .frames
            .iter()
            .map(|f| FramePointCloud {
                frame_index: f.index,
                timestamp: f.timestamp,
                tag: FrameTag::World,
                points: Vec::new(),
            })
            .collect();
        for stored in load_cloud(&dir.join(CLOUD_FILE))? {
            match frames.get_mut(usize::from(stored.frame_index)) {
                Some(frame) => frame.points = stored.points,
                None => {
                    return Err(SceneIoError::validation(format!(
                        "cloud container holds frame {} beyond the {} frames in scene.json",
                        stored.frame_index,
                        wire.frames.len()
                    )))
                }
            }
        }
        let rig = RigConfig {
            cameras: wire
                .rig
                .into_iter()
                .map(|c| RigCamera {
                    name: c.name,
                    intrinsics: c.intrinsics,
                    cam_to_ego: c.extrinsic,
                })
                .collect(),
        };
        Ok(Self {
            scene_id: wire.scene_id,
            rig,
            scene: Scene4D {
                frames,
                refined_poses: wire.frames.iter().map(|f| f.refined_pose).collect(),
                reports,
            },
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SceneIoError> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    std::fs::write(path, text).map_err(|e| SceneIoError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SceneIoError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SceneIoError::MissingFile(path.to_path_buf())
        } else {
            SceneIoError::io(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|e| SceneIoError::parse(path, e.to_string()))
}
