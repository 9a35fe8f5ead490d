//! SE(3) rigid transforms and pinhole camera math shared by every module.
//!
//! Frame conventions, used consistently across the crate:
//!
//! * camera frame: +z forward (optical axis), +x right, +y down;
//! * ego frame: +x forward, +y left, +z up, origin at the vehicle rig;
//! * world frame: the ego frame of the first frame of a sequence.
//!
//! Camera extrinsics map camera coordinates into the ego frame; ego poses
//! map ego coordinates into the world frame. All angles are radians, all
//! distances are meters.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted deviation of a quaternion norm from one before the
/// quaternion is rejected instead of renormalized.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}")]
    InvalidQuaternion { norm: f64 },
    #[error("rotation axis has zero length")]
    ZeroAxis,
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("depth must be positive, got {depth}")]
    NonPositiveDepth { depth: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A point in 3D space, in whichever frame the context dictates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn coords(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (self.coords() - other.coords()).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

/// A rigid transform (rotation followed by translation) between two frames.
///
/// `apply` maps coordinates expressed in the source frame into the target
/// frame: `p' = R p + t`.
///
/// Serialized as `{ "rotation": [w, x, y, z], "translation": [x, y, z] }`;
/// deserialization applies the same quaternion-norm gate as
/// [`RigidTransform::from_quaternion`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformWire", into = "TransformWire")]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformWire {
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl TryFrom<TransformWire> for RigidTransform {
    type Error = GeometryError;

    fn try_from(wire: TransformWire) -> Result<Self, GeometryError> {
        RigidTransform::from_quaternion(wire.rotation, wire.translation)
    }
}

impl From<RigidTransform> for TransformWire {
    fn from(t: RigidTransform) -> Self {
        let tr = t.translation();
        TransformWire {
            rotation: t.quaternion_wxyz(),
            translation: [tr.x, tr.y, tr.z],
        }
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a transform from a `(w, x, y, z)` quaternion and a translation.
    ///
    /// The quaternion is renormalized; a norm further than
    /// [`QUATERNION_NORM_TOLERANCE`] from one is rejected as data corruption
    /// rather than silently rescaled.
    pub fn from_quaternion(wxyz: [f64; 4], translation: [f64; 3]) -> Result<Self, GeometryError> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(GeometryError::InvalidQuaternion { norm });
        }
        Ok(Self {
            rotation: UnitQuaternion::from_quaternion(q),
            translation: Vector3::from(translation),
        })
    }

    /// Rotation about `axis` by `angle` radians plus a translation.
    pub fn from_axis_angle(
        axis: [f64; 3],
        angle: f64,
        translation: [f64; 3],
    ) -> Result<Self, GeometryError> {
        let axis = Vector3::from(axis);
        if axis.norm() == 0.0 {
            return Err(GeometryError::ZeroAxis);
        }
        Ok(Self {
            rotation: UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
            translation: Vector3::from(translation),
        })
    }

    /// Rotation about +z (a heading change) plus a translation.
    pub fn from_yaw(yaw: f64, translation: [f64; 3]) -> Self {
        Self {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation: Vector3::from(translation),
        }
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Rotation as `(w, x, y, z)`, normalized to a non-negative `w`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.into_inner();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        [s * q.w, s * q.i, s * q.j, s * q.k]
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        Point3::from_vector(self.rotation * p.coords() + self.translation)
    }

    pub fn apply_vector(&self, v: Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Returns the transform equivalent to applying `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> RigidTransform {
        let inv_rotation = self.rotation.inverse();
        RigidTransform {
            rotation: inv_rotation,
            translation: -(inv_rotation * self.translation),
        }
    }

    /// Magnitude of the rotation in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Rotation angle and translation distance separating two transforms.
    ///
    /// Both are zero exactly when the transforms are equal; handy for
    /// asserting pose recovery within a tolerance.
    pub fn difference(&self, other: &RigidTransform) -> (f64, f64) {
        let delta = self.compose(&other.invert());
        (delta.rotation_angle(), delta.translation().norm())
    }
}

/// A continuous pixel location paired with the depth it was observed at.
///
/// `u` grows rightwards, `v` downwards; the center of the pixel with integer
/// indices `(c, r)` is at `(c + 0.5, r + 0.5)`. `depth` is the camera-frame
/// z coordinate in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole camera intrinsics with zero skew and no distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsWire", into = "IntrinsicsWire")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

/// Serialized form of [`CameraIntrinsics`]; kept separate so deserialization
/// runs the same validation as the constructor.
#[derive(Serialize, Deserialize)]
struct IntrinsicsWire {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<IntrinsicsWire> for CameraIntrinsics {
    type Error = GeometryError;

    fn try_from(w: IntrinsicsWire) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(w.fx, w.fy, w.cx, w.cy, w.width, w.height)
    }
}

impl From<CameraIntrinsics> for IntrinsicsWire {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsWire {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size {width}x{height} must be positive"
            )));
        }
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths ({fx}, {fy}) must be positive and finite"
            )));
        }
        if !(cx.is_finite() && cy.is_finite())
            || cx < 0.0
            || cx >= f64::from(width)
            || cy < 0.0
            || cy >= f64::from(height)
        {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }

    pub fn fy(&self) -> f64 {
        self.fy
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Projects a camera-frame point onto the image plane.
    ///
    /// The result may fall outside the image bounds; callers decide whether
    /// that matters. Points at or behind the camera plane are an error.
    pub fn project(&self, p: Point3) -> Result<ImagePoint, GeometryError> {
        if p.z <= 0.0 {
            return Err(GeometryError::BehindCamera { z: p.z });
        }
        Ok(ImagePoint {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        })
    }

    /// Lifts a pixel location and a depth back to a camera-frame point.
    pub fn lift(&self, u: f64, v: f64, depth: f64) -> Result<Point3, GeometryError> {
        if depth <= 0.0 {
            return Err(GeometryError::NonPositiveDepth { depth });
        }
        Ok(Point3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        ))
    }
}

/// A box with arbitrary center and extents, rotated about +z by `yaw`.
///
/// Used both for dynamic-object annotations (ego frame) and for object
/// removal volumes (world frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point3,
    /// Half the box size along its local x, y and z axes.
    pub half_extents: [f64; 3],
    /// Rotation of the box around +z, radians.
    pub yaw: f64,
}

impl OrientedBox {
    pub fn new(center: Point3, half_extents: [f64; 3], yaw: f64) -> Self {
        Self {
            center,
            half_extents,
            yaw,
        }
    }

    /// Whether `p` lies inside or on the boundary of the box.
    pub fn contains(&self, p: Point3) -> bool {
        let d = p.coords() - self.center.coords();
        let (sin, cos) = self.yaw.sin_cos();
        let local_x = cos * d.x + sin * d.y;
        let local_y = -sin * d.x + cos * d.y;
        local_x.abs() <= self.half_extents[0]
            && local_y.abs() <= self.half_extents[1]
            && d.z.abs() <= self.half_extents[2]
    }

    /// The same box with every half extent grown by `margin` meters.
    pub fn inflated(&self, margin: f64) -> Self {
        Self {
            center: self.center,
            half_extents: [
                self.half_extents[0] + margin,
                self.half_extents[1] + margin,
                self.half_extents[2] + margin,
            ],
            yaw: self.yaw,
        }
    }
}
