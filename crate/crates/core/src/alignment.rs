//! Rigid alignment of per-frame clouds into a shared world frame.
//!
//! Coarse alignment applies the recorded ego pose to every point. Fine
//! alignment then runs point-to-point iterative closest point against a
//! reference cloud: nearest-neighbor correspondences within a distance gate,
//! a closed-form least-squares rigid solve, repeat until the mean squared
//! error stops improving. [`build_scene4d`] chains both over a sequence,
//! growing the reference from the frames aligned so far.

use crate::geometry::{Point3, RigidTransform};
use crate::kdtree::KdTree3;
use crate::reconstruction::{voxel_downsample, FramePointCloud, FrameTag, ScenePoint};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean squared error below which a fine alignment is declared exact.
pub const ABSOLUTE_ERROR_FLOOR_M2: f64 = 1e-12;

/// Default for [`AlignmentConfig::trim_fraction`].
pub const DEFAULT_TRIM_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("invalid alignment config: {0}")]
    InvalidConfig(String),
    #[error("frame {frame} carries tag {found:?} where {expected:?} is required")]
    WrongFrameTag {
        frame: u16,
        expected: FrameTag,
        found: FrameTag,
    },
    #[error("degenerate correspondence configuration: {0}")]
    DegenerateConfiguration(String),
    #[error(
        "iteration {iteration} found {found} correspondences, need at least {required}"
    )]
    InsufficientCorrespondences {
        iteration: usize,
        found: usize,
        required: usize,
    },
    #[error("{frames} frames but {poses} ego poses")]
    MismatchedInputs { frames: usize, poses: usize },
    #[error("cannot build a scene from zero frames")]
    EmptyScene,
    #[error("frame indices must count up from zero: expected {expected}, found {found}")]
    NonContiguousFrames { expected: u16, found: u16 },
}

/// Knobs for fine alignment. All defaults are deliberately conservative for
/// driving scenes with sub-meter ego-pose error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub max_iterations: usize,
    /// Stop once `(E_prev - E_cur) / E_prev` falls below this.
    pub rel_tolerance: f64,
    /// Correspondence distance gate, meters.
    pub max_correspondence_distance: f64,
    /// Fewer matches than this at any iteration aborts the alignment.
    pub min_correspondences: usize,
    /// Keep points flagged dynamic out of the correspondence sets.
    pub exclude_dynamic: bool,
    /// Voxel size for downsampling the accumulated reference cloud, meters.
    pub reference_voxel: f64,
    /// Fraction of the gated correspondences kept for each solve; the count
    /// is fixed by the first pairing. The discarded tail absorbs points
    /// without a true counterpart (partial frame overlap), whose coherent
    /// pull would otherwise bias the solution. Raise it toward 1.0 for
    /// sequences with near-total overlap.
    pub trim_fraction: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            rel_tolerance: 1e-6,
            max_correspondence_distance: 1.0,
            min_correspondences: 100,
            exclude_dynamic: true,
            reference_voxel: 0.1,
            trim_fraction: DEFAULT_TRIM_FRACTION,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<(), AlignmentError> {
        let fail = |msg: &str| Err(AlignmentError::InvalidConfig(msg.to_string()));
        if self.max_iterations < 1 {
            return fail("max_iterations must be at least 1");
        }
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance < 1.0) {
            return fail("rel_tolerance must lie in (0, 1)");
        }
        if !(self.max_correspondence_distance > 0.0)
            || !self.max_correspondence_distance.is_finite()
        {
            return fail("max_correspondence_distance must be positive and finite");
        }
        if self.min_correspondences < 3 {
            return fail("min_correspondences must be at least 3");
        }
        if !(self.reference_voxel > 0.0) || !self.reference_voxel.is_finite() {
            return fail("reference_voxel must be positive and finite");
        }
        if !(self.trim_fraction > 0.0 && self.trim_fraction <= 1.0) {
            return fail("trim_fraction must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Per-frame record of how fine alignment went.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Mean squared correspondence error at each iteration, m².
    pub errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of retained correspondences at each iteration; the first
    /// pairing fixes the retained count, so it only varies when the gated
    /// pool itself shrinks below it.
    pub correspondence_count: Vec<usize>,
}

impl AlignmentReport {
    fn coarse_only(converged: bool) -> Self {
        Self {
            errors: Vec::new(),
            iterations: 0,
            converged,
            correspondence_count: Vec::new(),
        }
    }
}

/// An aligned sequence: world-frame clouds plus the poses and reports that
/// produced them. Frames are sorted by index and indices are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene4D {
    pub frames: Vec<FramePointCloud>,
    /// Ego-to-world pose per frame after fine alignment.
    pub refined_poses: Vec<RigidTransform>,
    pub reports: Vec<AlignmentReport>,
}

impl Scene4D {
    pub fn frame_by_index(&self, index: u16) -> Option<&FramePointCloud> {
        self.frames.get(usize::from(index))
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

/// Maps an ego-frame cloud into the world frame with the given ego pose.
/// Point order, colors, flags and timestamps are untouched.
pub fn coarse_align(
    cloud: FramePointCloud,
    ego_pose: &RigidTransform,
) -> Result<FramePointCloud, AlignmentError> {
    if cloud.tag != FrameTag::Ego {
        return Err(AlignmentError::WrongFrameTag {
            frame: cloud.frame_index,
            expected: FrameTag::Ego,
            found: cloud.tag,
        });
    }
    let points = cloud
        .points
        .into_iter()
        .map(|p| ScenePoint {
            position: ego_pose.apply(p.position),
            ..p
        })
        .collect();
    Ok(FramePointCloud {
        frame_index: cloud.frame_index,
        timestamp: cloud.timestamp,
        tag: FrameTag::World,
        points,
    })
}

/// Least-squares rigid transform mapping sources onto targets.
///
/// Closed form: subtract centroids, build the cross-covariance, take its SVD
/// and force the rotation determinant to +1. Fails when fewer than three
/// pairs are given or the configuration leaves the rotation underdetermined
/// (collinear or coincident points on either side).
pub fn rigid_solve(pairs: &[(Point3, Point3)]) -> Result<RigidTransform, AlignmentError> {
    if pairs.len() < 3 {
        return Err(AlignmentError::DegenerateConfiguration(format!(
            "{} correspondence pairs, need at least 3",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mut source_centroid = Vector3::zeros();
    let mut target_centroid = Vector3::zeros();
    for (s, t) in pairs {
        source_centroid += s.coords();
        target_centroid += t.coords();
    }
    source_centroid /= n;
    target_centroid /= n;
    let mut cross = Matrix3::zeros();
    for (s, t) in pairs {
        cross += (s.coords() - source_centroid) * (t.coords() - target_centroid).transpose();
    }
    let svd = cross.svd(true, true);
    let sv = svd.singular_values;
    if !sv[0].is_finite() || sv[1] <= sv[0] * 1e-12 {
        return Err(AlignmentError::DegenerateConfiguration(
            "correspondences are collinear or coincident; rotation is underdetermined"
                .to_string(),
        ));
    }
    let u = svd.u.expect("svd computed with u");
    let v = svd.v_t.expect("svd computed with v_t").transpose();
    let d = (v * u.transpose()).determinant();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum())) * u.transpose();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
        rotation,
    ));
    let translation = target_centroid - rotation * source_centroid;
    Ok(RigidTransform::from_parts(rotation, translation))
}

fn correspondence_positions(cloud: &FramePointCloud, exclude_dynamic: bool) -> Vec<Point3> {
    cloud
        .points
        .iter()
        .filter(|p| !p.is_removed() && !(exclude_dynamic && p.is_dynamic()))
        .map(|p| p.position)
        .collect()
}

/// Iterative closest point from `source` toward `reference`.
///
/// Returns the correction that maps the original source positions onto the
/// reference, plus a per-iteration report. The mean squared error is
/// recorded before each solve, so `errors[k]` measures the correction in
/// force entering iteration k+1.
///
/// Each iteration pairs the transformed source against the reference by
/// gated nearest neighbor, then keeps only the `trim_fraction` best pairs
/// (a count fixed by the first pairing) for the error and the solve.
/// The clouds overlap only partially: boundary points, newly visible
/// surfaces, and range-cap fringes have no true counterpart, and their
/// coherent pull would otherwise drag the solution away from the real
/// minimum. A fixed retained count also keeps the recorded error
/// non-increasing: the sum of the m smallest squared distances under the
/// solved pose is bounded by the same sum over the previous retained set.
pub fn fine_align(
    source: &FramePointCloud,
    reference: &FramePointCloud,
    cfg: &AlignmentConfig,
) -> Result<(RigidTransform, AlignmentReport), AlignmentError> {
    cfg.validate()?;
    for cloud in [source, reference] {
        if cloud.tag != FrameTag::World {
            return Err(AlignmentError::WrongFrameTag {
                frame: cloud.frame_index,
                expected: FrameTag::World,
                found: cloud.tag,
            });
        }
    }
    let source_points = correspondence_positions(source, cfg.exclude_dynamic);
    let reference_points = correspondence_positions(reference, cfg.exclude_dynamic);
    let tree = KdTree3::build(reference_points.iter().map(|p| (*p).into()).collect());
    let mut correction = RigidTransform::identity();
    let mut errors: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut converged = false;
    let mut keep = 0usize;
    for iteration in 1..=cfg.max_iterations {
        let transformed: Vec<Point3> = source_points
            .par_iter()
            .map(|&p| correction.apply(p))
            .collect();
        let matches: Vec<Option<(u32, f64)>> = transformed
            .par_iter()
            .map(|p| tree.nearest_within((*p).into(), cfg.max_correspondence_distance))
            .collect();
        let mut gated: Vec<(f64, u32, u32)> = matches
            .iter()
            .enumerate()
            .filter_map(|(i, hit)| hit.map(|(target, d2)| (d2, i as u32, target)))
            .collect();
        if gated.len() < cfg.min_correspondences {
            return Err(AlignmentError::InsufficientCorrespondences {
                iteration,
                found: gated.len(),
                required: cfg.min_correspondences,
            });
        }
        if iteration == 1 {
            keep = ((gated.len() as f64 * cfg.trim_fraction).floor() as usize)
                .max(cfg.min_correspondences)
                .min(gated.len());
        }
        let retained = keep.min(gated.len());
        if retained < gated.len() {
            gated.select_nth_unstable_by(retained - 1, |a, b| {
                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
            });
            gated.truncate(retained);
        }
        gated.sort_unstable_by_key(|&(_, source_index, _)| source_index);
        let mut pairs = Vec::with_capacity(gated.len());
        let mut squared_sum = 0.0;
        for &(d2, source_index, target) in &gated {
            pairs.push((
                transformed[source_index as usize],
                reference_points[target as usize],
            ));
            squared_sum += d2;
        }
        counts.push(pairs.len());
        let error = squared_sum / pairs.len() as f64;
        if let Some(&previous) = errors.last() {
            debug_assert!(
                error <= previous + ABSOLUTE_ERROR_FLOOR_M2,
                "alignment error rose from {previous} to {error}"
            );
        }
        let improved_enough = match errors.last() {
            Some(&previous) if previous > 0.0 => {
                (previous - error) / previous >= cfg.rel_tolerance
            }
            Some(_) => false,
            None => true,
        };
        errors.push(error);
        if error < ABSOLUTE_ERROR_FLOOR_M2 || !improved_enough {
            converged = true;
            break;
        }
        let delta = rigid_solve(&pairs)?;
        correction = delta.compose(&correction);
    }
    let report = AlignmentReport {
        iterations: errors.len(),
        converged,
        errors,
        correspondence_count: counts,
    };
    Ok((correction, report))
}

/// Aligns a whole sequence. Frame 0 is coarse-aligned and becomes the
/// initial reference; each later frame is coarse-aligned, fine-aligned
/// against the accumulated reference, and folded into it.
///
/// A frame whose fine alignment finds too few or degenerate correspondences
/// keeps its coarse pose and is reported as not converged; configuration and
/// tag errors abort instead.
pub fn build_scene4d(
    frames: Vec<FramePointCloud>,
    ego_poses: &[RigidTransform],
    cfg: &AlignmentConfig,
) -> Result<Scene4D, AlignmentError> {
    cfg.validate()?;
    if frames.len() != ego_poses.len() {
        return Err(AlignmentError::MismatchedInputs {
            frames: frames.len(),
            poses: ego_poses.len(),
        });
    }
    if frames.is_empty() {
        return Err(AlignmentError::EmptyScene);
    }
    for (position, frame) in frames.iter().enumerate() {
        if usize::from(frame.frame_index) != position {
            return Err(AlignmentError::NonContiguousFrames {
                expected: position as u16,
                found: frame.frame_index,
            });
        }
    }
    let mut world_frames: Vec<FramePointCloud> = Vec::with_capacity(frames.len());
    let mut refined_poses = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    let mut reference_union: Vec<ScenePoint> = Vec::new();
    let mut reference: Option<FramePointCloud> = None;
    for (position, cloud) in frames.into_iter().enumerate() {
        let ego_pose = &ego_poses[position];
        let coarse = coarse_align(cloud, ego_pose)?;
        let (aligned, pose, report) = if let Some(reference) = &reference {
            match fine_align(&coarse, reference, cfg) {
                Ok((correction, report)) => {
                    let mut aligned = coarse;
                    for p in &mut aligned.points {
                        p.position = correction.apply(p.position);
                    }
                    (aligned, correction.compose(ego_pose), report)
                }
                Err(
                    err @ (AlignmentError::InsufficientCorrespondences { .. }
                    | AlignmentError::DegenerateConfiguration(_)),
                ) => {
                    log::warn!(
                        "frame {position}: fine alignment failed ({err}); keeping coarse pose"
                    );
                    (coarse, *ego_pose, AlignmentReport::coarse_only(false))
                }
                Err(err) => return Err(err),
            }
        } else {
            (coarse, *ego_pose, AlignmentReport::coarse_only(true))
        };
        reference_union.extend(aligned.points.iter().copied());
        let union_cloud = FramePointCloud {
            frame_index: 0,
            timestamp: 0.0,
            tag: FrameTag::World,
            points: std::mem::take(&mut reference_union),
        };
        let downsampled = voxel_downsample(&union_cloud, cfg.reference_voxel);
        reference_union = union_cloud.points;
        reference = Some(downsampled);
        world_frames.push(aligned);
        refined_poses.push(pose);
        reports.push(report);
    }
    Ok(Scene4D {
        frames: world_frames,
        refined_poses,
        reports,
    })
}
