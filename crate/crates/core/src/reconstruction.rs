//! Depth-map lifting and per-frame surround-view fusion.
//!
//! Each camera's depth map lifts into an ego-frame point cloud; the rig's
//! views concatenate into one cloud per frame. Clouds carry a frame tag so
//! downstream operations can state whether they expect ego or world
//! coordinates.

use crate::geometry::{CameraIntrinsics, OrientedBox, Point3, RigidTransform};
use crate::scene_io::{ColorImage, DepthMap, FrameRecord, SceneManifest};
use std::collections::HashMap;
use thiserror::Error;

/// Bit assignments for [`ScenePoint::flags`].
pub mod point_flags {
    /// The point belongs to an annotated dynamic object.
    pub const DYNAMIC: u8 = 1 << 0;
    /// The point was soft-deleted by object removal.
    pub const REMOVED: u8 = 1 << 1;
}

#[derive(Debug, Error)]
pub enum ReconstructionError {
    #[error("{what} is {width}x{height} but intrinsics expect {expected_width}x{expected_height}")]
    DimensionMismatch {
        what: &'static str,
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },
    #[error("cannot fuse views from frames {first} and {other}")]
    MixedFrames { first: u16, other: u16 },
    #[error("expected a cloud in the {expected:?} frame, got {found:?}")]
    WrongFrameTag { expected: FrameTag, found: FrameTag },
    #[error("fuse_frame needs at least one view")]
    NoViews,
    #[error("view frame index {found} does not match frame record {expected}")]
    FrameRecordMismatch { expected: usize, found: u16 },
}

/// Which coordinate frame a cloud's positions are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    /// Vehicle frame of the cloud's own timestamp.
    Ego,
    /// Shared scene frame (the ego frame of frame 0).
    World,
}

/// One reconstructed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: Point3,
    pub color: [u8; 3],
    /// Index of the rig camera that observed the point.
    pub camera_index: u8,
    /// See [`point_flags`].
    pub flags: u8,
}

impl ScenePoint {
    pub fn is_dynamic(&self) -> bool {
        self.flags & point_flags::DYNAMIC != 0
    }

    pub fn is_removed(&self) -> bool {
        self.flags & point_flags::REMOVED != 0
    }
}

/// All points reconstructed for one frame, plus frame metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePointCloud {
    pub frame_index: u16,
    pub timestamp: f64,
    pub tag: FrameTag,
    pub points: Vec<ScenePoint>,
}

impl FramePointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One rig camera: identity, intrinsics, and mounting pose.
#[derive(Debug, Clone)]
pub struct RigCamera {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    pub cam_to_ego: RigidTransform,
}

/// The fixed camera rig shared by every frame of a scene.
#[derive(Debug, Clone)]
pub struct RigConfig {
    pub cameras: Vec<RigCamera>,
}

impl RigConfig {
    /// Rig described by the manifest's first frame (the rig is fixed, so any
    /// frame would do; manifest validation guarantees they all agree on names
    /// and order).
    pub fn from_manifest(manifest: &SceneManifest) -> Self {
        let cameras = manifest.frames[0]
            .cameras
            .iter()
            .map(|c| RigCamera {
                name: c.name.clone(),
                intrinsics: c.intrinsics,
                cam_to_ego: c.cam_to_ego,
            })
            .collect();
        Self { cameras }
    }

    pub fn camera_count(&self) -> usize {
        self.cameras.len()
    }

    pub fn find(&self, name: &str) -> Option<(usize, &RigCamera)> {
        self.cameras
            .iter()
            .enumerate()
            .find(|(_, c)| c.name == name)
    }
}

/// Lifts one view's depth map into an ego-frame cloud.
///
/// One point per valid (non-zero) depth pixel on the stride grid, lifted at
/// the pixel center `(u + 0.5, v + 0.5)` and mapped through `cam_to_ego`.
/// Points appear in row-major pixel order.
pub fn lift_view(
    depth: &DepthMap,
    image: &ColorImage,
    k: &CameraIntrinsics,
    cam_to_ego: &RigidTransform,
    stride: u32,
    frame_index: u16,
    camera_index: u8,
) -> Result<FramePointCloud, ReconstructionError> {
    assert!(stride >= 1, "stride must be at least 1");
    check_dims("depth map", depth.width(), depth.height(), k)?;
    check_dims("color image", image.width(), image.height(), k)?;
    let mut points = Vec::new();
    let mut v = 0;
    while v < k.height() {
        let mut u = 0;
        while u < k.width() {
            if let Some(meters) = depth.meters(u, v) {
                let p_cam = k
                    .lift(f64::from(u) + 0.5, f64::from(v) + 0.5, meters)
                    .expect("valid depth is positive");
                points.push(ScenePoint {
                    position: cam_to_ego.apply(p_cam),
                    color: image.get(u, v),
                    camera_index,
                    flags: 0,
                });
            }
            u += stride;
        }
        v += stride;
    }
    Ok(FramePointCloud {
        frame_index,
        timestamp: 0.0,
        tag: FrameTag::Ego,
        points,
    })
}

/// Concatenates the rig's view clouds into the frame's cloud.
///
/// Views must be passed in rig order; point order is rig order then each
/// view's row-major pixel order, so fusion is deterministic.
pub fn fuse_frame(
    views: Vec<FramePointCloud>,
    frame: &FrameRecord,
) -> Result<FramePointCloud, ReconstructionError> {
    let first = views.first().ok_or(ReconstructionError::NoViews)?;
    let frame_index = first.frame_index;
    for view in &views {
        if view.tag != FrameTag::Ego {
            return Err(ReconstructionError::WrongFrameTag {
                expected: FrameTag::Ego,
                found: view.tag,
            });
        }
        if view.frame_index != frame_index {
            return Err(ReconstructionError::MixedFrames {
                first: frame_index,
                other: view.frame_index,
            });
        }
    }
    if usize::from(frame_index) != frame.index {
        return Err(ReconstructionError::FrameRecordMismatch {
            expected: frame.index,
            found: frame_index,
        });
    }
    let mut points = Vec::with_capacity(views.iter().map(|v| v.len()).sum());
    for view in views {
        points.extend(view.points);
    }
    Ok(FramePointCloud {
        frame_index,
        timestamp: frame.timestamp,
        tag: FrameTag::Ego,
        points,
    })
}

/// Sets the dynamic flag on every point inside any of the ego-frame boxes.
///
/// Returns how many points are inside a box.
pub fn mark_dynamic(
    cloud: &mut FramePointCloud,
    boxes: &[OrientedBox],
) -> Result<usize, ReconstructionError> {
    if cloud.tag != FrameTag::Ego {
        return Err(ReconstructionError::WrongFrameTag {
            expected: FrameTag::Ego,
            found: cloud.tag,
        });
    }
    if boxes.is_empty() {
        return Ok(0);
    }
    let mut marked = 0;
    for point in &mut cloud.points {
        if boxes.iter().any(|b| b.contains(point.position)) {
            point.flags |= point_flags::DYNAMIC;
            marked += 1;
        }
    }
    Ok(marked)
}

/// Keeps at most one point per `voxel`-sized cell.
///
/// The representative is the cell's point nearest the cell centroid, ties
/// broken by lowest original index; output order is ascending original
/// index, which makes the operation deterministic and idempotent.
pub fn voxel_downsample(cloud: &FramePointCloud, voxel: f64) -> FramePointCloud {
    assert!(
        voxel > 0.0 && voxel.is_finite(),
        "voxel size must be positive and finite"
    );
    struct Cell {
        sum: [f64; 3],
        count: f64,
        best_index: usize,
        best_d2: f64,
    }
    let mut cells: HashMap<(i64, i64, i64), Cell> = HashMap::new();
    for point in &cloud.points {
        let cell = cells.entry(voxel_key(point.position, voxel)).or_insert(Cell {
            sum: [0.0; 3],
            count: 0.0,
            best_index: usize::MAX,
            best_d2: f64::INFINITY,
        });
        cell.sum[0] += point.position.x;
        cell.sum[1] += point.position.y;
        cell.sum[2] += point.position.z;
        cell.count += 1.0;
    }
    for (index, point) in cloud.points.iter().enumerate() {
        let cell = cells
            .get_mut(&voxel_key(point.position, voxel))
            .expect("cell populated in first pass");
        let centroid = Point3::new(
            cell.sum[0] / cell.count,
            cell.sum[1] / cell.count,
            cell.sum[2] / cell.count,
        );
        let d2 = {
            let d = point.position.coords() - centroid.coords();
            d.norm_squared()
        };
        if d2 < cell.best_d2 {
            cell.best_d2 = d2;
            cell.best_index = index;
        }
    }
    let mut keep: Vec<usize> = cells.values().map(|c| c.best_index).collect();
    keep.sort_unstable();
    FramePointCloud {
        frame_index: cloud.frame_index,
        timestamp: cloud.timestamp,
        tag: cloud.tag,
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
    }
}

fn voxel_key(p: Point3, voxel: f64) -> (i64, i64, i64) {
    (
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    )
}

fn check_dims(
    what: &'static str,
    width: u32,
    height: u32,
    k: &CameraIntrinsics,
) -> Result<(), ReconstructionError> {
    if width != k.width() || height != k.height() {
        return Err(ReconstructionError::DimensionMismatch {
            what,
            expected_width: k.width(),
            expected_height: k.height(),
            width,
            height,
        });
    }
    Ok(())
}
