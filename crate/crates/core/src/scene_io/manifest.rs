//! The scene manifest: one JSON file describing a recorded sequence.
//!
//! Schema (all paths relative to the manifest file):
//!
//! ```json
//! {
//!   "scene_id": "example",
//!   "rig": ["CAM_FRONT", "CAM_BACK"],
//!   "frames": [
//!     {
//!       "index": 0,
//!       "timestamp": 0.0,
//!       "ego_pose": { "rotation": [1, 0, 0, 0], "translation": [0, 0, 0] },
//!       "cameras": [
//!         {
//!           "name": "CAM_FRONT",
//!           "intrinsics": { "fx": 300, "fy": 300, "cx": 160, "cy": 120,
//!                           "width": 320, "height": 240 },
//!           "extrinsic": { "rotation": [1, 0, 0, 0], "translation": [0, 0, 0] },
//!           "image_path": "frames/000000/CAM_FRONT_color.png",
//!           "depth_path": "frames/000000/CAM_FRONT_depth.png"
//!         }
//!       ],
//!       "dynamic_boxes": [
//!         { "center": [8, 0, 0.5], "half_extents": [2, 1, 0.5], "yaw": 0.0 }
//!       ]
//!     }
//!   ]
//! }
//! ```
//!
//! Rotations are `(w, x, y, z)` unit quaternions; `ego_pose` maps ego to
//! world, `extrinsic` maps camera to ego. `dynamic_boxes` are ego-frame and
//! optional. Unknown fields are ignored with a warning.

use super::SceneIoError;
use crate::geometry::{CameraIntrinsics, OrientedBox, RigidTransform};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A fully validated scene manifest.
#[derive(Debug, Clone)]
pub struct SceneManifest {
    pub scene_id: String,
    /// Camera names in rig order; every frame lists exactly these cameras.
    pub rig: Vec<String>,
    pub frames: Vec<FrameRecord>,
    /// Directory the manifest was loaded from; resolves relative paths.
    pub root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp: f64,
    /// Ego-to-world pose.
    pub ego_pose: RigidTransform,
    pub cameras: Vec<CameraRecord>,
    /// Ego-frame boxes around dynamic objects in this frame.
    pub dynamic_boxes: Vec<OrientedBox>,
}

#[derive(Debug, Clone)]
pub struct CameraRecord {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-ego pose.
    pub cam_to_ego: RigidTransform,
    pub image_path: PathBuf,
    pub depth_path: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct ManifestWire {
    scene_id: String,
    rig: Vec<String>,
    frames: Vec<FrameWire>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct FrameWire {
    index: usize,
    timestamp: f64,
    ego_pose: PoseWire,
    cameras: Vec<CameraWire>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    dynamic_boxes: Vec<BoxWire>,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CameraWire {
    name: String,
    intrinsics: IntrinsicsWire,
    extrinsic: PoseWire,
    image_path: PathBuf,
    depth_path: PathBuf,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct PoseWire {
    rotation: [f64; 4],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsWire {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
struct BoxWire {
    center: [f64; 3],
    half_extents: [f64; 3],
    yaw: f64,
}

impl SceneManifest {
    /// Loads and eagerly validates a manifest, including the existence and
    /// dimensions of every referenced image file.
    pub fn load(path: &Path) -> Result<Self, SceneIoError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                SceneIoError::MissingFile(path.to_path_buf())
            } else {
                SceneIoError::io(path, e)
            }
        })?;
        let wire: ManifestWire =
            serde_json::from_str(&text).map_err(|e| SceneIoError::parse(path, e.to_string()))?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::from_wire(wire, root)
    }

    /// Writes the manifest as pretty-printed JSON.
    pub fn save(&self, path: &Path) -> Result<(), SceneIoError> {
        let wire = self.to_wire();
        let text = serde_json::to_string_pretty(&wire).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| SceneIoError::io(path, e))
    }

    /// Resolves a manifest-relative path.
    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.root.join(relative)
    }

    fn from_wire(wire: ManifestWire, root: PathBuf) -> Result<Self, SceneIoError> {
        warn_unknown("manifest", &wire.extra);
        if wire.rig.is_empty() {
            return Err(SceneIoError::validation("rig must list at least one camera"));
        }
        if wire.rig.len() > 256 {
            return Err(SceneIoError::validation(
                "rig exceeds 256 cameras, the camera-index limit",
            ));
        }
        for (i, name) in wire.rig.iter().enumerate() {
            if wire.rig[..i].contains(name) {
                return Err(SceneIoError::validation(format!(
                    "rig camera name {name:?} appears twice"
                )));
            }
        }
        if wire.frames.is_empty() {
            return Err(SceneIoError::validation("manifest has no frames"));
        }
        if wire.frames.len() > usize::from(u16::MAX) + 1 {
            return Err(SceneIoError::validation(
                "frame count exceeds the 16-bit frame-index limit",
            ));
        }
        let mut frames = Vec::with_capacity(wire.frames.len());
        let mut last_timestamp = f64::NEG_INFINITY;
        for (position, frame) in wire.frames.into_iter().enumerate() {
            warn_unknown(&format!("frame {position}"), &frame.extra);
            if frame.index != position {
                return Err(SceneIoError::validation(format!(
                    "frame at position {position} has index {}",
                    frame.index
                )));
            }
            if !frame.timestamp.is_finite() || frame.timestamp <= last_timestamp {
                return Err(SceneIoError::validation(format!(
                    "frame {position}: timestamps must be finite and strictly increasing"
                )));
            }
            last_timestamp = frame.timestamp;
            let ego_pose = pose_from_wire(&frame.ego_pose)
                .map_err(|e| SceneIoError::validation(format!("frame {position} ego_pose: {e}")))?;
            let camera_names: Vec<&str> =
                frame.cameras.iter().map(|c| c.name.as_str()).collect();
            let rig_names: Vec<&str> = wire.rig.iter().map(String::as_str).collect();
            if camera_names != rig_names {
                return Err(SceneIoError::validation(format!(
                    "frame {position}: cameras {camera_names:?} do not match rig {rig_names:?}"
                )));
            }
            let mut cameras = Vec::with_capacity(frame.cameras.len());
            for camera in frame.cameras {
                let ctx = format!("frame {position} camera {:?}", camera.name);
                warn_unknown(&ctx, &camera.extra);
                let k = &camera.intrinsics;
                let intrinsics =
                    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height)
                        .map_err(|e| SceneIoError::validation(format!("{ctx}: {e}")))?;
                let cam_to_ego = pose_from_wire(&camera.extrinsic)
                    .map_err(|e| SceneIoError::validation(format!("{ctx} extrinsic: {e}")))?;
                for (what, rel) in [("image", &camera.image_path), ("depth", &camera.depth_path)] {
                    check_asset(&root, rel, what, &intrinsics, &ctx)?;
                }
                cameras.push(CameraRecord {
                    name: camera.name,
                    intrinsics,
                    cam_to_ego,
                    image_path: camera.image_path,
                    depth_path: camera.depth_path,
                });
            }
            let mut dynamic_boxes = Vec::with_capacity(frame.dynamic_boxes.len());
            for (bi, b) in frame.dynamic_boxes.iter().enumerate() {
                if b.half_extents.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
                    return Err(SceneIoError::validation(format!(
                        "frame {position} dynamic_boxes[{bi}]: half extents must be positive"
                    )));
                }
                dynamic_boxes.push(OrientedBox::new(b.center.into(), b.half_extents, b.yaw));
            }
            frames.push(FrameRecord {
                index: frame.index,
                timestamp: frame.timestamp,
                ego_pose,
                cameras,
                dynamic_boxes,
            });
        }
        Ok(Self {
            scene_id: wire.scene_id,
            rig: wire.rig,
            frames,
            root,
        })
    }

    fn to_wire(&self) -> ManifestWire {
        ManifestWire {
            scene_id: self.scene_id.clone(),
            rig: self.rig.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| FrameWire {
                    index: f.index,
                    timestamp: f.timestamp,
                    ego_pose: pose_to_wire(&f.ego_pose),
                    cameras: f
                        .cameras
                        .iter()
                        .map(|c| CameraWire {
                            name: c.name.clone(),
                            intrinsics: IntrinsicsWire {
                                fx: c.intrinsics.fx(),
                                fy: c.intrinsics.fy(),
                                cx: c.intrinsics.cx(),
                                cy: c.intrinsics.cy(),
                                width: c.intrinsics.width(),
                                height: c.intrinsics.height(),
                            },
                            extrinsic: pose_to_wire(&c.cam_to_ego),
                            image_path: c.image_path.clone(),
                            depth_path: c.depth_path.clone(),
                            extra: BTreeMap::new(),
                        })
                        .collect(),
                    dynamic_boxes: f
                        .dynamic_boxes
                        .iter()
                        .map(|b| BoxWire {
                            center: b.center.into(),
                            half_extents: b.half_extents,
                            yaw: b.yaw,
                        })
                        .collect(),
                    extra: BTreeMap::new(),
                })
                .collect(),
            extra: BTreeMap::new(),
        }
    }
}

fn pose_from_wire(wire: &PoseWire) -> Result<RigidTransform, crate::geometry::GeometryError> {
    RigidTransform::from_quaternion(wire.rotation, wire.translation)
}

fn pose_to_wire(pose: &RigidTransform) -> PoseWire {
    let t = pose.translation();
    PoseWire {
        rotation: pose.quaternion_wxyz(),
        translation: [t.x, t.y, t.z],
    }
}

fn warn_unknown(context: &str, extra: &BTreeMap<String, serde_json::Value>) {
    for key in extra.keys() {
        log::warn!("{context}: ignoring unknown field {key:?}");
    }
}

fn check_asset(
    root: &Path,
    relative: &Path,
    what: &str,
    k: &CameraIntrinsics,
    ctx: &str,
) -> Result<(), SceneIoError> {
    let path = root.join(relative);
    if !path.is_file() {
        return Err(SceneIoError::MissingFile(path));
    }
    let (width, height) = image::image_dimensions(&path)
        .map_err(|e| SceneIoError::parse(&path, format!("{ctx} {what}: {e}")))?;
    if width != k.width() || height != k.height() {
        return Err(SceneIoError::DimensionMismatch {
            path,
            expected_width: k.width(),
            expected_height: k.height(),
            width,
            height,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_io::{save_color, save_depth, ColorImage, DepthMap};
    use std::fs;

    fn write_assets(dir: &Path, frames: usize, cams: &[&str], w: u32, h: u32) {
        for f in 0..frames {
            let frame_dir = dir.join(format!("frames/{f:06}"));
            fs::create_dir_all(&frame_dir).unwrap();
            for cam in cams {
                save_color(&ColorImage::new(w, h), &frame_dir.join(format!("{cam}_color.png")))
                    .unwrap();
                save_depth(&DepthMap::new(w, h), &frame_dir.join(format!("{cam}_depth.png")))
                    .unwrap();
            }
        }
    }

    fn manifest_json(frames: usize, cams: &[&str]) -> serde_json::Value {
        let frame_entries: Vec<serde_json::Value> = (0..frames)
            .map(|f| {
                serde_json::json!({
                    "index": f,
                    "timestamp": f as f64 * 0.5,
                    "ego_pose": { "rotation": [1, 0, 0, 0], "translation": [f as f64, 0, 0] },
                    "cameras": cams.iter().map(|cam| serde_json::json!({
                        "name": cam,
                        "intrinsics": { "fx": 10.0, "fy": 10.0, "cx": 4.0, "cy": 3.0,
                                        "width": 8, "height": 6 },
                        "extrinsic": { "rotation": [1, 0, 0, 0], "translation": [0, 0, 0] },
                        "image_path": format!("frames/{f:06}/{cam}_color.png"),
                        "depth_path": format!("frames/{f:06}/{cam}_depth.png"),
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "scene_id": "test",
            "rig": cams,
            "frames": frame_entries,
        })
    }

    fn write_manifest(dir: &Path, value: &serde_json::Value) -> PathBuf {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        path
    }

    #[test]
    fn loads_well_formed_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A", "CAM_B"];
        write_assets(dir.path(), 2, &cams, 8, 6);
        let path = write_manifest(dir.path(), &manifest_json(2, &cams));
        let manifest = SceneManifest::load(&path).unwrap();
        assert_eq!(manifest.frames.len(), 2);
        assert_eq!(manifest.rig, vec!["CAM_A", "CAM_B"]);
        assert_eq!(manifest.frames[1].cameras.len(), 2);
    }

    #[test]
    fn rejects_missing_rig_camera() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A", "CAM_B"];
        write_assets(dir.path(), 2, &cams, 8, 6);
        let mut value = manifest_json(2, &cams);
        value["frames"][1]["cameras"]
            .as_array_mut()
            .unwrap()
            .remove(1);
        let path = write_manifest(dir.path(), &value);
        let err = SceneManifest::load(&path).unwrap_err();
        assert!(
            matches!(&err, SceneIoError::Validation(msg) if msg.contains("frame 1")),
            "unexpected error: {err}"
        );
    }

    #[test]
    fn rejects_non_increasing_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 2, &cams, 8, 6);
        let mut value = manifest_json(2, &cams);
        value["frames"][1]["timestamp"] = serde_json::json!(0.0);
        let path = write_manifest(dir.path(), &value);
        assert!(matches!(
            SceneManifest::load(&path),
            Err(SceneIoError::Validation(_))
        ));
    }

    #[test]
    fn rejects_bad_quaternion() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 1, &cams, 8, 6);
        let mut value = manifest_json(1, &cams);
        value["frames"][0]["ego_pose"]["rotation"] = serde_json::json!([1.5, 0, 0, 0]);
        let path = write_manifest(dir.path(), &value);
        let err = SceneManifest::load(&path).unwrap_err();
        assert!(matches!(&err, SceneIoError::Validation(msg) if msg.contains("ego_pose")));
    }

    #[test]
    fn rejects_missing_asset() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 1, &cams, 8, 6);
        fs::remove_file(dir.path().join("frames/000000/CAM_A_depth.png")).unwrap();
        let path = write_manifest(dir.path(), &manifest_json(1, &cams));
        assert!(matches!(
            SceneManifest::load(&path),
            Err(SceneIoError::MissingFile(_))
        ));
    }

    #[test]
    fn rejects_wrong_asset_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 1, &cams, 4, 6);
        let path = write_manifest(dir.path(), &manifest_json(1, &cams));
        assert!(matches!(
            SceneManifest::load(&path),
            Err(SceneIoError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        fs::write(&path, "{ not json").unwrap();
        assert!(matches!(
            SceneManifest::load(&path),
            Err(SceneIoError::Parse { .. })
        ));
    }

    #[test]
    fn accepts_dynamic_boxes_and_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 1, &cams, 8, 6);
        let mut value = manifest_json(1, &cams);
        value["frames"][0]["dynamic_boxes"] = serde_json::json!([
            { "center": [1, 2, 0.5], "half_extents": [1, 1, 0.5], "yaw": 0.3 }
        ]);
        value["custom_field"] = serde_json::json!("ignored");
        let path = write_manifest(dir.path(), &value);
        let manifest = SceneManifest::load(&path).unwrap();
        assert_eq!(manifest.frames[0].dynamic_boxes.len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cams = ["CAM_A"];
        write_assets(dir.path(), 2, &cams, 8, 6);
        let path = write_manifest(dir.path(), &manifest_json(2, &cams));
        let manifest = SceneManifest::load(&path).unwrap();
        let copy_path = dir.path().join("copy.json");
        manifest.save(&copy_path).unwrap();
        let back = SceneManifest::load(&copy_path).unwrap();
        assert_eq!(back.frames.len(), manifest.frames.len());
        assert_eq!(back.rig, manifest.rig);
        for (a, b) in back.frames.iter().zip(&manifest.frames) {
            assert_eq!(a.timestamp, b.timestamp);
            let (rot, trans) = a.ego_pose.difference(&b.ego_pose);
            assert!(rot == 0.0 && trans == 0.0);
        }
    }
}
