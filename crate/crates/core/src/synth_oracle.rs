//! Analytic synthetic scene generator.
//!
//! Builds driving-style fixtures entirely from closed-form geometry: a
//! checkered ground plane at z = 0, solid-colored boxes (static or moving
//! at constant velocity), a multi-camera rig, and an ego vehicle following
//! a constant-speed, constant-yaw-rate arc. Every pixel is ray-cast
//! analytically at its center, so depth maps are exact up to millimeter
//! quantization and expected projections can be computed by hand.
//!
//! [`generate`] writes the same manifest and PNG layout that real capture
//! data uses, plus a `ground_truth.json` sidecar holding exact ego poses,
//! applied pose perturbations, and per-frame object centers. Harnesses
//! perturb a generated manifest with [`perturb_poses`], run the pipeline,
//! and score recovery against the sidecar.

use crate::geometry::{CameraIntrinsics, OrientedBox, Point3, RigidTransform};
use crate::scene_io::{
    save_color, save_depth, CameraRecord, ColorImage, DepthMap, FrameRecord, SceneIoError,
    SceneManifest,
};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Manifest file name written by [`generate`].
pub const MANIFEST_FILE: &str = "manifest.json";

/// Sidecar file name for exact poses, perturbations, and object tracks.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Dynamic-object annotation boxes are grown by this margin so that depth
/// quantization never pushes a surface point outside its box.
pub const ANNOTATION_MARGIN_M: f64 = 0.002;

const RAY_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic scene spec: {0}")]
    InvalidSpec(String),
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error(transparent)]
    SceneIo(#[from] SceneIoError),
}

/// Complete description of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub scene_id: String,
    /// Recorded in the spec for downstream seeding; generation itself is
    /// purely deterministic.
    #[serde(default)]
    pub seed: u64,
    pub frame_count: usize,
    /// Seconds between consecutive frames.
    pub frame_dt: f64,
    pub rig: Vec<CameraMount>,
    #[serde(default)]
    pub ego: EgoMotion,
    #[serde(default)]
    pub objects: Vec<SynthObject>,
    #[serde(default)]
    pub ground: Option<GroundPlane>,
}

/// One camera on the rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraMount {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    pub cam_to_ego: RigidTransform,
}

/// Constant-speed, constant-yaw-rate ego motion starting at the world
/// origin heading +x.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoMotion {
    /// Meters per second along the heading.
    pub speed: f64,
    /// Radians per second about +z.
    pub yaw_rate: f64,
}

impl EgoMotion {
    /// Ego-to-world pose at `time` seconds: a straight line for zero yaw
    /// rate, otherwise a circular arc of radius speed / yaw_rate.
    pub fn pose_at(&self, time: f64) -> RigidTransform {
        let yaw = self.yaw_rate * time;
        let position = if self.yaw_rate.abs() < 1e-12 {
            [self.speed * time, 0.0, 0.0]
        } else {
            let radius = self.speed / self.yaw_rate;
            [radius * yaw.sin(), radius * (1.0 - yaw.cos()), 0.0]
        };
        RigidTransform::from_yaw(yaw, position)
    }
}

/// A solid-colored box, optionally translating at constant velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthObject {
    /// World-frame center at time zero.
    pub center: Point3,
    pub half_extents: [f64; 3],
    /// Rotation about +z, radians.
    #[serde(default)]
    pub yaw: f64,
    pub color: [u8; 3],
    /// World-frame meters per second.
    #[serde(default)]
    pub velocity: [f64; 3],
    /// Whether the object is annotated as dynamic in the manifest.
    #[serde(default)]
    pub dynamic: bool,
}

impl SynthObject {
    fn center_at(&self, time: f64) -> Point3 {
        Point3::new(
            self.center.x + self.velocity[0] * time,
            self.center.y + self.velocity[1] * time,
            self.center.z + self.velocity[2] * time,
        )
    }

    fn world_box_at(&self, time: f64) -> OrientedBox {
        OrientedBox::new(self.center_at(time), self.half_extents, self.yaw)
    }
}

/// Checkered plane at z = 0 covering the whole world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundPlane {
    /// Side length of one checker cell, meters.
    pub checker_size: f64,
    pub color_a: [u8; 3],
    pub color_b: [u8; 3],
}

impl GroundPlane {
    fn color_at(&self, x: f64, y: f64) -> [u8; 3] {
        let cell = (x / self.checker_size).floor() as i64 + (y / self.checker_size).floor() as i64;
        if cell.rem_euclid(2) == 0 {
            self.color_a
        } else {
            self.color_b
        }
    }
}

/// Exact scene state written next to the manifest for harness scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Unperturbed ego-to-world pose per frame.
    pub ego_poses: Vec<RigidTransform>,
    /// Perturbation applied to each frame's manifest pose; identity until
    /// [`perturb_poses`] records otherwise.
    pub perturbations: Vec<RigidTransform>,
    pub objects: Vec<ObjectTrack>,
}

/// Per-frame world-frame centers of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub dynamic: bool,
    pub color: [u8; 3],
    pub centers: Vec<Point3>,
}

impl GroundTruth {
    pub fn load(dir: &Path) -> Result<Self, SynthError> {
        let path = dir.join(GROUND_TRUTH_FILE);
        let bytes = std::fs::read(&path).map_err(|e| {
            SynthError::SceneIo(if e.kind() == std::io::ErrorKind::NotFound {
                SceneIoError::MissingFile(path.clone())
            } else {
                SceneIoError::Io {
                    path: path.clone(),
                    source: e,
                }
            })
        })?;
        serde_json::from_slice(&bytes).map_err(|e| {
            SynthError::SceneIo(SceneIoError::Parse {
                path,
                message: e.to_string(),
            })
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), SynthError> {
        let path = dir.join(GROUND_TRUTH_FILE);
        let bytes = serde_json::to_vec_pretty(self).expect("ground truth serializes");
        std::fs::write(&path, bytes).map_err(|e| {
            SynthError::SceneIo(SceneIoError::Io { path, source: e })
        })
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let invalid = |message: String| Err(SynthError::InvalidSpec(message));
        if self.frame_count == 0 {
            return invalid("frame_count must be at least 1".into());
        }
        if self.frame_count > 65_536 {
            return invalid(format!("frame_count {} exceeds 65536", self.frame_count));
        }
        if !(self.frame_dt.is_finite() && self.frame_dt > 0.0) {
            return invalid(format!("frame_dt {} must be positive", self.frame_dt));
        }
        if self.rig.is_empty() {
            return invalid("rig must list at least one camera".into());
        }
        if self.rig.len() > 256 {
            return invalid(format!("rig has {} cameras, limit is 256", self.rig.len()));
        }
        for (i, mount) in self.rig.iter().enumerate() {
            if self.rig[..i].iter().any(|m| m.name == mount.name) {
                return invalid(format!("duplicate camera name {:?}", mount.name));
            }
        }
        if !(self.ego.speed.is_finite() && self.ego.yaw_rate.is_finite()) {
            return invalid("ego speed and yaw rate must be finite".into());
        }
        for (i, object) in self.objects.iter().enumerate() {
            if !object.center.is_finite() || !object.yaw.is_finite() {
                return invalid(format!("object {i} has a non-finite center or yaw"));
            }
            if object
                .half_extents
                .iter()
                .any(|&h| !(h.is_finite() && h > 0.0))
            {
                return invalid(format!(
                    "object {i} half extents {:?} must be positive",
                    object.half_extents
                ));
            }
            if object.velocity.iter().any(|v| !v.is_finite()) {
                return invalid(format!("object {i} has a non-finite velocity"));
            }
        }
        if let Some(ground) = &self.ground {
            if !(ground.checker_size.is_finite() && ground.checker_size > 0.0) {
                return invalid(format!(
                    "checker_size {} must be positive",
                    ground.checker_size
                ));
            }
        }
        Ok(())
    }
}

fn mount_rotation(columns: [[f64; 3]; 3]) -> UnitQuaternion<f64> {
    let m = Matrix3::from_columns(&[
        Vector3::from(columns[0]),
        Vector3::from(columns[1]),
        Vector3::from(columns[2]),
    ]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

/// A camera at `position` (ego frame) looking along ego +x, image right
/// toward ego -y, image down toward ego -z.
pub fn forward_camera(name: &str, intrinsics: CameraIntrinsics, position: [f64; 3]) -> CameraMount {
    let rotation = mount_rotation([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]);
    CameraMount {
        name: name.to_string(),
        intrinsics,
        cam_to_ego: RigidTransform::from_parts(rotation, Vector3::from(position)),
    }
}

/// A camera `height` meters above the ego origin looking straight down,
/// image right toward ego -y.
pub fn downward_camera(name: &str, intrinsics: CameraIntrinsics, height: f64) -> CameraMount {
    let rotation = mount_rotation([[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]]);
    CameraMount {
        name: name.to_string(),
        intrinsics,
        cam_to_ego: RigidTransform::from_parts(rotation, Vector3::new(0.0, 0.0, height)),
    }
}

/// Ray parameter of the entry into `b`, if the ray hits it. Directions use
/// the unnormalized camera-ray convention, so the parameter equals camera
/// depth.
fn intersect_box(origin: &Vector3<f64>, dir: &Vector3<f64>, b: &OrientedBox) -> Option<f64> {
    let (sin, cos) = b.yaw.sin_cos();
    let rel = origin - b.center.coords();
    let p = [cos * rel.x + sin * rel.y, -sin * rel.x + cos * rel.y, rel.z];
    let d = [cos * dir.x + sin * dir.y, -sin * dir.x + cos * dir.y, dir.z];
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    for axis in 0..3 {
        let h = b.half_extents[axis];
        if d[axis].abs() < 1e-15 {
            if p[axis].abs() > h {
                return None;
            }
        } else {
            let t1 = (-h - p[axis]) / d[axis];
            let t2 = (h - p[axis]) / d[axis];
            near = near.max(t1.min(t2));
            far = far.min(t1.max(t2));
        }
    }
    (near <= far && near > RAY_EPSILON).then_some(near)
}

fn intersect_ground(origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    if dir.z.abs() < 1e-15 {
        return None;
    }
    let s = -origin.z / dir.z;
    (s > RAY_EPSILON).then_some(s)
}

/// Ray-casts one camera view at one frame time.
fn render_view(spec: &SynthSpec, frame: usize, mount: &CameraMount) -> (ColorImage, DepthMap) {
    let time = frame as f64 * spec.frame_dt;
    let cam_to_world = spec.ego.pose_at(time).compose(&mount.cam_to_ego);
    let origin = cam_to_world.translation();
    let rotation = cam_to_world.rotation_matrix();
    let boxes: Vec<(OrientedBox, [u8; 3])> = spec
        .objects
        .iter()
        .map(|o| (o.world_box_at(time), o.color))
        .collect();
    let k = &mount.intrinsics;
    let mut color = ColorImage::new(k.width(), k.height());
    let mut depth = DepthMap::new(k.width(), k.height());
    for py in 0..k.height() {
        for px in 0..k.width() {
            let u = f64::from(px) + 0.5;
            let v = f64::from(py) + 0.5;
            let dir_cam = Vector3::new((u - k.cx()) / k.fx(), (v - k.cy()) / k.fy(), 1.0);
            let dir = rotation * dir_cam;
            let mut best: Option<(f64, [u8; 3])> = None;
            if let (Some(ground), Some(s)) = (&spec.ground, intersect_ground(&origin, &dir)) {
                let hit = origin + s * dir;
                best = Some((s, ground.color_at(hit.x, hit.y)));
            }
            for (world_box, box_color) in &boxes {
                if let Some(s) = intersect_box(&origin, &dir, world_box) {
                    if best.is_none_or(|(d, _)| s < d) {
                        best = Some((s, *box_color));
                    }
                }
            }
            if let Some((s, rgb)) = best {
                color.set(px, py, rgb);
                depth.set(px, py, DepthMap::quantize(s));
            }
        }
    }
    (color, depth)
}

/// Generates the scene under `out_dir`: per-frame color and depth PNGs,
/// `manifest.json`, and the ground-truth sidecar. Output is byte-for-byte
/// deterministic in the spec.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<SceneManifest, SynthError> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.frame_count)
        .flat_map(|f| (0..spec.rig.len()).map(move |c| (f, c)))
        .collect();
    jobs.into_par_iter()
        .map(|(frame, camera)| {
            let mount = &spec.rig[camera];
            let (color, depth) = render_view(spec, frame, mount);
            let dir = out_dir.join(format!("frames/{frame:06}"));
            std::fs::create_dir_all(&dir).map_err(|e| SceneIoError::Io {
                path: dir.clone(),
                source: e,
            })?;
            save_color(&color, &dir.join(format!("{}_color.png", mount.name)))?;
            save_depth(&depth, &dir.join(format!("{}_depth.png", mount.name)))?;
            Ok(())
        })
        .collect::<Result<Vec<()>, SynthError>>()?;
    let frames: Vec<FrameRecord> = (0..spec.frame_count)
        .map(|frame| {
            let time = frame as f64 * spec.frame_dt;
            let ego_pose = spec.ego.pose_at(time);
            let ego_from_world = ego_pose.invert();
            let ego_yaw = spec.ego.yaw_rate * time;
            let cameras = spec
                .rig
                .iter()
                .map(|mount| CameraRecord {
                    name: mount.name.clone(),
                    intrinsics: mount.intrinsics,
                    cam_to_ego: mount.cam_to_ego,
                    image_path: PathBuf::from(format!(
                        "frames/{frame:06}/{}_color.png",
                        mount.name
                    )),
                    depth_path: PathBuf::from(format!(
                        "frames/{frame:06}/{}_depth.png",
                        mount.name
                    )),
                })
                .collect();
            let dynamic_boxes = spec
                .objects
                .iter()
                .filter(|o| o.dynamic)
                .map(|o| {
                    OrientedBox::new(
                        ego_from_world.apply(o.center_at(time)),
                        o.half_extents,
                        o.yaw - ego_yaw,
                    )
                    .inflated(ANNOTATION_MARGIN_M)
                })
                .collect();
            FrameRecord {
                index: frame,
                timestamp: time,
                ego_pose,
                cameras,
                dynamic_boxes,
            }
        })
        .collect();
    let ground_truth = GroundTruth {
        ego_poses: frames.iter().map(|f| f.ego_pose).collect(),
        perturbations: vec![RigidTransform::identity(); frames.len()],
        objects: spec
            .objects
            .iter()
            .map(|o| ObjectTrack {
                dynamic: o.dynamic,
                color: o.color,
                centers: (0..spec.frame_count)
                    .map(|f| o.center_at(f as f64 * spec.frame_dt))
                    .collect(),
            })
            .collect(),
    };
    let manifest = SceneManifest {
        scene_id: spec.scene_id.clone(),
        rig: spec.rig.iter().map(|m| m.name.clone()).collect(),
        frames,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    ground_truth.save(out_dir)?;
    Ok(manifest)
}

fn ball_sample(rng: &mut ChaCha8Rng, radius: f64) -> Vector3<f64> {
    if radius == 0.0 {
        return Vector3::zeros();
    }
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        );
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Composes each ego pose after frame 0 with a random world-frame rigid
/// perturbation: rotation angle at most `rot_deg` degrees and translation
/// at most `trans_m` meters, both uniform in the ball. Frame 0 anchors the
/// world frame and stays exact. Returns the perturbed manifest and the
/// per-frame perturbations (identity for frame 0), so a recovered
/// correction can be scored as compose(correction, perturbation) against
/// identity.
pub fn perturb_poses(
    manifest: &SceneManifest,
    rot_deg: f64,
    trans_m: f64,
    seed: u64,
) -> (SceneManifest, Vec<RigidTransform>) {
    assert!(
        rot_deg >= 0.0 && rot_deg.is_finite(),
        "rotation bound {rot_deg} must be a non-negative finite number of degrees"
    );
    assert!(
        trans_m >= 0.0 && trans_m.is_finite(),
        "translation bound {trans_m} must be a non-negative finite number of meters"
    );
    let mut perturbed = manifest.clone();
    let mut perturbations = vec![RigidTransform::identity(); manifest.frames.len()];
    if rot_deg == 0.0 && trans_m == 0.0 {
        return (perturbed, perturbations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (frame, perturbation) in perturbed
        .frames
        .iter_mut()
        .zip(perturbations.iter_mut())
        .skip(1)
    {
        let rotvec = ball_sample(&mut rng, rot_deg.to_radians());
        let trans = ball_sample(&mut rng, trans_m);
        let angle = rotvec.norm();
        let p = if angle == 0.0 {
            RigidTransform::from_yaw(0.0, trans.into())
        } else {
            RigidTransform::from_axis_angle((rotvec / angle).into(), angle, trans.into())
                .expect("axis is unit length")
        };
        frame.ego_pose = p.compose(&frame.ego_pose);
        *perturbation = p;
    }
    (perturbed, perturbations)
}

/// Exact projection of a world point into one camera at one frame, for
/// hand-checked parallax and motion assertions. Returns continuous pixel
/// coordinates and camera depth.
pub fn analytic_pixel(
    spec: &SynthSpec,
    frame: usize,
    camera: usize,
    world_point: Point3,
) -> Result<(f64, f64, f64), SynthError> {
    assert!(
        frame < spec.frame_count,
        "frame {frame} out of range for {} frames",
        spec.frame_count
    );
    assert!(
        camera < spec.rig.len(),
        "camera {camera} out of range for rig of {}",
        spec.rig.len()
    );
    let mount = &spec.rig[camera];
    let time = frame as f64 * spec.frame_dt;
    let cam_to_world = spec.ego.pose_at(time).compose(&mount.cam_to_ego);
    let p_cam = cam_to_world.invert().apply(world_point);
    let pixel = mount
        .intrinsics
        .project(p_cam)
        .map_err(|_| SynthError::BehindCamera { depth: p_cam.z })?;
    Ok((pixel.u, pixel.v, pixel.depth))
}
