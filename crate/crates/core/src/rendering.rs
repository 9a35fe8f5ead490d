//! Sparse keyframe rendering with decoupled space and time controls.
//!
//! A render selects a set of frames (the time control) and a camera pose
//! (the space control), gathers the selected world-frame points, and
//! z-buffers them into color, depth and occupancy images. Holding the time
//! selector fixed while sweeping poses gives a frozen-time sequence; holding
//! the pose fixed while stepping frames gives a frozen-space sequence.
//! Object removal soft-deletes points so that renders skip them, and the
//! training-pair exporter projects each even frame's cloud through the
//! preceding odd frame's camera.

use crate::alignment::Scene4D;
use crate::geometry::{CameraIntrinsics, OrientedBox, Point3, RigidTransform};
use crate::reconstruction::point_flags;
use crate::scene_io::{load_color, ColorImage, DepthMap, OccupancyMask, SceneIoError, SceneManifest};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Points closer than this to the camera plane are discarded.
pub const ZNEAR_M: f64 = 0.05;

/// Hard cap on the splat radius; beyond this a "point" is a billboard.
pub const MAX_SPLAT_RADIUS: u32 = 3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render control: {0}")]
    InvalidControl(String),
    #[error("frame {index} selected but the scene has {frame_count} frames")]
    FrameOutOfRange { index: u16, frame_count: usize },
    #[error("no frames selected")]
    EmptySelection,
    #[error("need at least 2 frames for training pairs, scene has {frames}")]
    TooFewFrames { frames: usize },
    #[error("scene has {scene_frames} frames but the manifest lists {manifest_frames}")]
    ManifestMismatch {
        scene_frames: usize,
        manifest_frames: usize,
    },
    #[error(transparent)]
    SceneIo(#[from] SceneIoError),
}

/// What to render: a camera, a set of frames, and how fat to draw points.
#[derive(Debug, Clone)]
pub struct RenderControl {
    camera_pose: RigidTransform,
    intrinsics: CameraIntrinsics,
    time_selector: Vec<u16>,
    splat_radius: u32,
}

impl RenderControl {
    /// The selector is treated as a set: duplicates collapse and order is
    /// normalized ascending.
    pub fn new(
        camera_pose: RigidTransform,
        intrinsics: CameraIntrinsics,
        time_selector: Vec<u16>,
        splat_radius: u32,
    ) -> Result<Self, RenderError> {
        if splat_radius > MAX_SPLAT_RADIUS {
            return Err(RenderError::InvalidControl(format!(
                "splat_radius {splat_radius} exceeds the maximum {MAX_SPLAT_RADIUS}"
            )));
        }
        let mut time_selector = time_selector;
        time_selector.sort_unstable();
        time_selector.dedup();
        Ok(Self {
            camera_pose,
            intrinsics,
            time_selector,
            splat_radius,
        })
    }

    /// Camera-to-world pose.
    pub fn camera_pose(&self) -> &RigidTransform {
        &self.camera_pose
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    pub fn time_selector(&self) -> &[u16] {
        &self.time_selector
    }

    pub fn splat_radius(&self) -> u32 {
        self.splat_radius
    }
}

/// Depth image at full float precision, meters; 0.0 marks empty pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBuffer {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Depth in meters, or 0.0 where nothing landed.
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[self.index(x, y)]
    }

    fn set(&mut self, x: u32, y: u32, meters: f32) {
        let i = self.index(x, y);
        self.data[i] = meters;
    }

    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    /// Quantizes to the 16-bit millimeter format, saturating out-of-range
    /// depths rather than dropping occupied pixels.
    pub fn to_depth_map(&self) -> DepthMap {
        let mut map = DepthMap::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let meters = self.get(x, y);
                if meters > 0.0 {
                    let mm = (f64::from(meters) * 1000.0).round().clamp(1.0, 65535.0);
                    map.set(x, y, mm as u16);
                }
            }
        }
        map
    }
}

/// One rendered keyframe. Empty pixels are black, zero-depth, unoccupied.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeRender {
    pub color: ColorImage,
    pub depth: DepthBuffer,
    pub occupancy: OccupancyMask,
}

/// A world-frame box that soft-deletes the points inside it over a span of
/// frames (inclusive on both ends).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemovalBox {
    pub center: Point3,
    pub half_extents: [f64; 3],
    pub yaw: f64,
    pub frame_range: (u16, u16),
}

impl RemovalBox {
    fn oriented(&self) -> OrientedBox {
        OrientedBox::new(self.center, self.half_extents, self.yaw)
    }

    fn covers_frame(&self, frame_index: u16) -> bool {
        self.frame_range.0 <= frame_index && frame_index <= self.frame_range.1
    }
}

/// An even frame's cloud seen through the preceding odd frame's camera,
/// paired with that odd frame's ground-truth image. Frame indices are
/// 0-based storage indices, so `even_frame = odd_frame + 1`.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub even_frame: u16,
    pub odd_frame: u16,
    pub camera_index: u8,
    pub condition: KeyframeRender,
    pub target: ColorImage,
}

/// Z-buffers the selected frames' points into one keyframe image.
///
/// Points flagged removed are skipped; each survivor lands on pixel
/// `(floor(u), floor(v))` and its splat square. The nearest depth wins and
/// exact ties keep the earliest point in (frame, point) order.
pub fn render_keyframe(
    scene: &Scene4D,
    control: &RenderControl,
) -> Result<KeyframeRender, RenderError> {
    if control.time_selector.is_empty() {
        return Err(RenderError::EmptySelection);
    }
    for &index in &control.time_selector {
        if usize::from(index) >= scene.frames.len() {
            return Err(RenderError::FrameOutOfRange {
                index,
                frame_count: scene.frames.len(),
            });
        }
    }
    let width = control.intrinsics.width();
    let height = control.intrinsics.height();
    let world_to_cam = control.camera_pose.invert();
    let radius = i64::from(control.splat_radius);
    let mut zbuf = vec![f64::INFINITY; width as usize * height as usize];
    let mut color = ColorImage::new(width, height);
    let mut depth = DepthBuffer::new(width, height);
    let mut occupancy = OccupancyMask::new(width, height);
    for &frame_index in &control.time_selector {
        let frame = &scene.frames[usize::from(frame_index)];
        for point in &frame.points {
            if point.is_removed() {
                continue;
            }
            let cam = world_to_cam.apply(point.position);
            if cam.z <= ZNEAR_M {
                continue;
            }
            let projected = control
                .intrinsics
                .project(cam)
                .expect("projection valid beyond the near plane");
            let px = projected.u.floor() as i64;
            let py = projected.v.floor() as i64;
            for dy in -radius..=radius {
                let y = py + dy;
                if y < 0 || y >= i64::from(height) {
                    continue;
                }
                for dx in -radius..=radius {
                    let x = px + dx;
                    if x < 0 || x >= i64::from(width) {
                        continue;
                    }
                    let (x, y) = (x as u32, y as u32);
                    let i = y as usize * width as usize + x as usize;
                    if cam.z < zbuf[i] {
                        zbuf[i] = cam.z;
                        color.set(x, y, point.color);
                        depth.set(x, y, cam.z as f32);
                        occupancy.set(x, y, true);
                    }
                }
            }
        }
    }
    Ok(KeyframeRender {
        color,
        depth,
        occupancy,
    })
}

/// Fixed frame, sweeping camera: one render per pose, in pose order.
pub fn render_frozen_time(
    scene: &Scene4D,
    frame_index: u16,
    camera_poses: &[RigidTransform],
    intrinsics: &CameraIntrinsics,
    splat_radius: u32,
) -> Result<Vec<KeyframeRender>, RenderError> {
    camera_poses
        .par_iter()
        .map(|pose| {
            let control =
                RenderControl::new(*pose, *intrinsics, vec![frame_index], splat_radius)?;
            render_keyframe(scene, &control)
        })
        .collect()
}

/// Fixed camera, stepping time: one render per requested frame, in order.
pub fn render_frozen_space(
    scene: &Scene4D,
    camera_pose: &RigidTransform,
    times: &[u16],
    intrinsics: &CameraIntrinsics,
    splat_radius: u32,
) -> Result<Vec<KeyframeRender>, RenderError> {
    times
        .par_iter()
        .map(|&frame_index| {
            let control =
                RenderControl::new(*camera_pose, *intrinsics, vec![frame_index], splat_radius)?;
            render_keyframe(scene, &control)
        })
        .collect()
}

/// Soft-deletes every point lying inside any box during that box's frame
/// range. Counts are unchanged; flagged points are simply skipped by
/// renders. The input scene is left untouched.
pub fn remove_objects(scene: &Scene4D, boxes: &[RemovalBox]) -> Scene4D {
    for (i, b) in boxes.iter().enumerate() {
        assert!(
            b.half_extents.iter().all(|&h| h > 0.0 && h.is_finite()),
            "removal box {i} has non-positive half extents"
        );
        assert!(
            b.frame_range.0 <= b.frame_range.1,
            "removal box {i} has an inverted frame range"
        );
    }
    let mut out = scene.clone();
    for frame in &mut out.frames {
        let active: Vec<OrientedBox> = boxes
            .iter()
            .filter(|b| b.covers_frame(frame.frame_index))
            .map(RemovalBox::oriented)
            .collect();
        if active.is_empty() {
            continue;
        }
        for point in &mut frame.points {
            if active.iter().any(|b| b.contains(point.position)) {
                point.flags |= point_flags::REMOVED;
            }
        }
    }
    out
}

/// Projects each even frame's cloud through the preceding odd frame's
/// refined camera poses and pairs it with that odd frame's ground-truth
/// images. Pairs are ordered by (pair index, camera index).
///
/// Storage indices are 0-based, so the pairs are (1→0), (3→2), ...; under
/// the 1-based frame labels used in annotation tooling these are the
/// (2→1), (4→3), ... even-to-odd pairs.
pub fn export_training_pairs(
    scene: &Scene4D,
    manifest: &SceneManifest,
    splat_radius: u32,
) -> Result<Vec<TrainingPair>, RenderError> {
    if scene.frames.len() < 2 {
        return Err(RenderError::TooFewFrames {
            frames: scene.frames.len(),
        });
    }
    if manifest.frames.len() != scene.frames.len() {
        return Err(RenderError::ManifestMismatch {
            scene_frames: scene.frames.len(),
            manifest_frames: manifest.frames.len(),
        });
    }
    let mut jobs = Vec::new();
    let mut pair = 0;
    while 2 * pair + 1 < scene.frames.len() {
        let odd = 2 * pair;
        let even = odd + 1;
        for camera_index in 0..manifest.rig.len() {
            jobs.push((odd, even, camera_index));
        }
        pair += 1;
    }
    jobs.into_par_iter()
        .map(|(odd, even, camera_index)| {
            let record = &manifest.frames[odd].cameras[camera_index];
            let camera_pose = scene.refined_poses[odd].compose(&record.cam_to_ego);
            let control = RenderControl::new(
                camera_pose,
                record.intrinsics,
                vec![even as u16],
                splat_radius,
            )?;
            let condition = render_keyframe(scene, &control)?;
            let target = load_color(&manifest.resolve(&record.image_path))?;
            Ok(TrainingPair {
                even_frame: even as u16,
                odd_frame: odd as u16,
                camera_index: camera_index as u8,
                condition,
                target,
            })
        })
        .collect()
}

/// Writes a keyframe render as the standard PNG triple
/// `<stem>_color.png`, `<stem>_depth.png`, `<stem>_occ.png`.
pub fn save_render(render: &KeyframeRender, dir: &Path, stem: &str) -> Result<(), SceneIoError> {
    crate::scene_io::save_color(&render.color, &dir.join(format!("{stem}_color.png")))?;
    crate::scene_io::save_depth(&render.depth.to_depth_map(), &dir.join(format!("{stem}_depth.png")))?;
    crate::scene_io::save_mask(&render.occupancy, &dir.join(format!("{stem}_occ.png")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::AlignmentReport;
    use crate::reconstruction::{lift_view, FramePointCloud, FrameTag, ScenePoint};
    use crate::scene_io::{save_color, CameraRecord, FrameRecord};
    use std::path::PathBuf;

    fn test_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    fn point_at(position: [f64; 3], color: [u8; 3]) -> ScenePoint {
        ScenePoint {
            position: position.into(),
            color,
            camera_index: 0,
            flags: 0,
        }
    }

    fn scene_of(frames: Vec<Vec<ScenePoint>>) -> Scene4D {
        let count = frames.len();
        Scene4D {
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(i, points)| FramePointCloud {
                    frame_index: i as u16,
                    timestamp: i as f64,
                    tag: FrameTag::World,
                    points,
                })
                .collect(),
            refined_poses: vec![RigidTransform::identity(); count],
            reports: vec![
                AlignmentReport {
                    errors: Vec::new(),
                    iterations: 0,
                    converged: true,
                    correspondence_count: Vec::new(),
                };
                count
            ],
        }
    }

    fn control_for(scene_frames: &[u16], radius: u32) -> RenderControl {
        RenderControl::new(
            RigidTransform::identity(),
            test_intrinsics(),
            scene_frames.to_vec(),
            radius,
        )
        .unwrap()
    }

    #[test]
    fn control_normalizes_selector_and_caps_radius() {
        let control = RenderControl::new(
            RigidTransform::identity(),
            test_intrinsics(),
            vec![3, 1, 3, 0],
            2,
        )
        .unwrap();
        assert_eq!(control.time_selector(), &[0, 1, 3]);
        assert!(matches!(
            RenderControl::new(RigidTransform::identity(), test_intrinsics(), vec![0], 4),
            Err(RenderError::InvalidControl(_))
        ));
    }

    #[test]
    fn single_point_lands_on_projected_pixel() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [10, 20, 30])]]);
        let render = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        assert_eq!(render.occupancy.set_count(), 1);
        assert!(render.occupancy.get(50, 50));
        assert_eq!(render.depth.get(50, 50), 2.0);
        assert_eq!(render.color.get(50, 50), [10, 20, 30]);
        assert_eq!(render.depth.to_depth_map().get(50, 50), 2000);
    }

    #[test]
    fn nearer_point_wins_the_depth_test() {
        let scene = scene_of(vec![vec![
            point_at([0.0, 0.0, 3.0], [3, 3, 3]),
            point_at([0.0, 0.0, 2.0], [2, 2, 2]),
        ]]);
        let render = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        assert_eq!(render.color.get(50, 50), [2, 2, 2]);
        assert_eq!(render.depth.get(50, 50), 2.0);
    }

    #[test]
    fn equal_depth_keeps_the_earlier_point() {
        let scene = scene_of(vec![vec![
            point_at([0.0, 0.0, 2.0], [1, 1, 1]),
            point_at([0.0, 0.0, 2.0], [9, 9, 9]),
        ]]);
        let render = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        assert_eq!(render.color.get(50, 50), [1, 1, 1]);
    }

    #[test]
    fn empty_selector_is_rejected() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])]]);
        assert!(matches!(
            render_keyframe(&scene, &control_for(&[], 0)),
            Err(RenderError::EmptySelection)
        ));
    }

    #[test]
    fn out_of_range_frame_is_rejected() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])]]);
        assert!(matches!(
            render_keyframe(&scene, &control_for(&[5], 0)),
            Err(RenderError::FrameOutOfRange {
                index: 5,
                frame_count: 1
            })
        ));
    }

    #[test]
    fn near_plane_discards_close_points() {
        let scene = scene_of(vec![vec![
            point_at([0.0, 0.0, 0.05], [1, 1, 1]),
            point_at([0.0, 0.0, -1.0], [2, 2, 2]),
        ]]);
        let render = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        assert_eq!(render.occupancy.set_count(), 0);
    }

    #[test]
    fn splat_radius_fills_a_square() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [7, 7, 7])]]);
        let render = render_keyframe(&scene, &control_for(&[0], 1)).unwrap();
        assert_eq!(render.occupancy.set_count(), 9);
        for y in 49..=51 {
            for x in 49..=51 {
                assert!(render.occupancy.get(x, y));
                assert_eq!(render.depth.get(x, y), 2.0);
            }
        }
    }

    #[test]
    fn splat_clips_at_image_border() {
        // Projects to pixel (0, 0): only the in-bounds quarter of the
        // 3x3 splat survives.
        let scene = scene_of(vec![vec![point_at([-0.99, -0.99, 2.0], [7, 7, 7])]]);
        let render = render_keyframe(&scene, &control_for(&[0], 1)).unwrap();
        assert_eq!(render.occupancy.set_count(), 4);
    }

    #[test]
    fn zbuffer_matches_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let points: Vec<ScenePoint> = (0..300)
            .map(|i| {
                point_at(
                    [
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(-0.6..0.6),
                        rng.gen_range(0.5..6.0),
                    ],
                    [i as u8, (i / 2) as u8, 9],
                )
            })
            .collect();
        let scene = scene_of(vec![points.clone()]);
        for radius in [0u32, 2] {
            let render = render_keyframe(&scene, &control_for(&[0], radius)).unwrap();
            let k = test_intrinsics();
            for y in 0..k.height() {
                for x in 0..k.width() {
                    let mut best: Option<(f64, [u8; 3])> = None;
                    for p in &points {
                        let cam = p.position;
                        if cam.z <= ZNEAR_M {
                            continue;
                        }
                        let proj = k.project(cam).unwrap();
                        let (px, py) = (proj.u.floor() as i64, proj.v.floor() as i64);
                        let r = i64::from(radius);
                        let covers = (px - i64::from(x)).abs() <= r
                            && (py - i64::from(y)).abs() <= r;
                        if covers && best.is_none_or(|(d, _)| cam.z < d) {
                            best = Some((cam.z, p.color));
                        }
                    }
                    match best {
                        Some((depth, color)) => {
                            assert!(render.occupancy.get(x, y));
                            assert_eq!(render.depth.get(x, y), depth as f32);
                            assert_eq!(render.color.get(x, y), color);
                        }
                        None => assert!(!render.occupancy.get(x, y)),
                    }
                }
            }
        }
    }

    #[test]
    fn lifted_view_reprojects_to_source_pixels() {
        let k = CameraIntrinsics::new(40.0, 40.0, 16.0, 12.0, 32, 24).unwrap();
        let mut image = ColorImage::new(32, 24);
        let mut depth = DepthMap::new(32, 24);
        for y in 0..24 {
            for x in 0..32 {
                image.set(x, y, [x as u8, y as u8, 100]);
                depth.set(x, y, 4000);
            }
        }
        let cloud = lift_view(&depth, &image, &k, &RigidTransform::identity(), 1, 0, 0).unwrap();
        let scene = Scene4D {
            frames: vec![FramePointCloud {
                tag: FrameTag::World,
                ..cloud
            }],
            refined_poses: vec![RigidTransform::identity()],
            reports: vec![AlignmentReport {
                errors: Vec::new(),
                iterations: 0,
                converged: true,
                correspondence_count: Vec::new(),
            }],
        };
        let control =
            RenderControl::new(RigidTransform::identity(), k, vec![0], 0).unwrap();
        let render = render_keyframe(&scene, &control).unwrap();
        assert_eq!(render.occupancy.set_count(), 32 * 24);
        for y in 0..24 {
            for x in 0..32 {
                assert_eq!(render.color.get(x, y), [x as u8, y as u8, 100]);
            }
        }
    }

    #[test]
    fn renders_only_selected_frames() {
        let scene = scene_of(vec![
            vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])],
            vec![point_at([0.1, 0.0, 2.0], [2, 2, 2])],
        ]);
        let render_before = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        let mut edited = scene.clone();
        edited.frames[1].points = vec![point_at([0.0, 0.0, 1.0], [9, 9, 9]); 50];
        let render_after = render_keyframe(&edited, &control_for(&[0], 0)).unwrap();
        assert_eq!(render_before, render_after);
        let both = render_keyframe(&scene, &control_for(&[0, 1], 0)).unwrap();
        assert_eq!(both.occupancy.set_count(), 2);
    }

    #[test]
    fn frozen_time_parallax_matches_projection() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 10.0], [5, 5, 5])]]);
        let poses = [
            RigidTransform::identity(),
            RigidTransform::from_yaw(0.0, [2.0, 0.0, 0.0]),
        ];
        let renders =
            render_frozen_time(&scene, 0, &poses, &test_intrinsics(), 0).unwrap();
        assert!(renders[0].occupancy.get(50, 50));
        assert!(renders[1].occupancy.get(30, 50));
        assert_eq!(renders[1].occupancy.set_count(), 1);
    }

    #[test]
    fn frozen_time_is_pure() {
        let scene = scene_of(vec![vec![
            point_at([0.3, -0.2, 4.0], [5, 5, 5]),
            point_at([-0.1, 0.4, 2.5], [6, 6, 6]),
        ]]);
        let pose = RigidTransform::from_yaw(0.1, [0.5, 0.0, 0.0]);
        let renders =
            render_frozen_time(&scene, 0, &[pose, pose], &test_intrinsics(), 1).unwrap();
        assert_eq!(renders[0], renders[1]);
    }

    #[test]
    fn frozen_space_static_scene_is_time_invariant() {
        let statics = vec![
            point_at([0.2, 0.1, 3.0], [1, 2, 3]),
            point_at([-0.4, 0.3, 5.0], [4, 5, 6]),
        ];
        let scene = scene_of(vec![statics.clone(), statics.clone(), statics]);
        let renders = render_frozen_space(
            &scene,
            &RigidTransform::identity(),
            &[0, 1, 2],
            &test_intrinsics(),
            0,
        )
        .unwrap();
        assert_eq!(renders[0], renders[1]);
        assert_eq!(renders[1], renders[2]);
    }

    #[test]
    fn frozen_space_tracks_a_moving_point() {
        let frames: Vec<Vec<ScenePoint>> = (0..3)
            .map(|t| vec![point_at([f64::from(t), 0.0, 10.0], [8, 8, 8])])
            .collect();
        let scene = scene_of(frames);
        let renders = render_frozen_space(
            &scene,
            &RigidTransform::identity(),
            &[0, 1, 2],
            &test_intrinsics(),
            0,
        )
        .unwrap();
        for (t, expected_x) in [(0usize, 50u32), (1, 60), (2, 70)] {
            assert!(renders[t].occupancy.get(expected_x, 50), "frame {t}");
            assert_eq!(renders[t].occupancy.set_count(), 1);
        }
    }

    #[test]
    fn frozen_space_empty_frame_renders_empty() {
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])], vec![]]);
        let renders = render_frozen_space(
            &scene,
            &RigidTransform::identity(),
            &[1],
            &test_intrinsics(),
            0,
        )
        .unwrap();
        assert_eq!(renders[0].occupancy.set_count(), 0);
    }

    #[test]
    fn remove_objects_flags_exactly_the_boxed_points() {
        let mut cluster: Vec<ScenePoint> = (0..100)
            .map(|i| point_at([5.0 + 0.001 * f64::from(i), 0.0, 1.0], [1, 1, 1]))
            .collect();
        cluster.push(point_at([20.0, 0.0, 1.0], [2, 2, 2]));
        let scene = scene_of(vec![cluster.clone(), cluster]);
        let boxes = [RemovalBox {
            center: Point3::new(5.05, 0.0, 1.0),
            half_extents: [0.5, 0.5, 0.5],
            yaw: 0.0,
            frame_range: (0, 0),
        }];
        let removed = remove_objects(&scene, &boxes);
        let count = |frame: &FramePointCloud| {
            frame.points.iter().filter(|p| p.is_removed()).count()
        };
        assert_eq!(count(&removed.frames[0]), 100);
        assert_eq!(count(&removed.frames[1]), 0);
        assert_eq!(removed.frames[0].points.len(), 101);
        assert_eq!(scene.frames[0].points.iter().filter(|p| p.is_removed()).count(), 0);
    }

    #[test]
    fn remove_objects_with_no_boxes_is_identity() {
        let scene = scene_of(vec![vec![point_at([1.0, 2.0, 3.0], [1, 1, 1])]]);
        assert_eq!(remove_objects(&scene, &[]), scene);
        let miss = [RemovalBox {
            center: Point3::new(100.0, 0.0, 0.0),
            half_extents: [1.0, 1.0, 1.0],
            yaw: 0.0,
            frame_range: (0, 0),
        }];
        assert_eq!(remove_objects(&scene, &miss), scene);
    }

    #[test]
    fn removed_points_vanish_from_renders() {
        let scene = scene_of(vec![vec![
            point_at([0.0, 0.0, 2.0], [1, 1, 1]),
            point_at([0.2, 0.2, 2.0], [2, 2, 2]),
        ]]);
        let boxes = [RemovalBox {
            center: Point3::new(0.0, 0.0, 2.0),
            half_extents: [0.05, 0.05, 0.05],
            yaw: 0.0,
            frame_range: (0, 0),
        }];
        let removed = remove_objects(&scene, &boxes);
        let render = render_keyframe(&removed, &control_for(&[0], 0)).unwrap();
        assert_eq!(render.occupancy.set_count(), 1);
        assert!(!render.occupancy.get(50, 50));
    }

    fn manifest_with_images(dir: &Path, frame_count: usize, cameras: &[&str]) -> SceneManifest {
        let k = test_intrinsics();
        let mut frames = Vec::new();
        for f in 0..frame_count {
            let mut records = Vec::new();
            for (ci, cam) in cameras.iter().enumerate() {
                let rel = PathBuf::from(format!("{f:06}_{cam}.png"));
                let mut image = ColorImage::new(k.width(), k.height());
                image.set(0, 0, [f as u8, ci as u8, 0]);
                save_color(&image, &dir.join(&rel)).unwrap();
                records.push(CameraRecord {
                    name: (*cam).to_string(),
                    intrinsics: k,
                    cam_to_ego: RigidTransform::identity(),
                    image_path: rel.clone(),
                    depth_path: rel,
                });
            }
            frames.push(FrameRecord {
                index: f,
                timestamp: f as f64,
                ego_pose: RigidTransform::identity(),
                cameras: records,
                dynamic_boxes: Vec::new(),
            });
        }
        SceneManifest {
            scene_id: "render-test".to_string(),
            rig: cameras.iter().map(|c| (*c).to_string()).collect(),
            frames,
            root: dir.to_path_buf(),
        }
    }

    #[test]
    fn training_pairs_follow_even_to_odd_parity() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with_images(dir.path(), 8, &["CAM_FRONT"]);
        let frames: Vec<Vec<ScenePoint>> = (0..8)
            .map(|f| vec![point_at([0.0, 0.0, 2.0 + f64::from(f)], [f as u8, 0, 0])])
            .collect();
        let scene = scene_of(frames);
        let pairs = export_training_pairs(&scene, &manifest, 0).unwrap();
        assert_eq!(pairs.len(), 4);
        let indices: Vec<(u16, u16)> =
            pairs.iter().map(|p| (p.even_frame, p.odd_frame)).collect();
        assert_eq!(indices, vec![(1, 0), (3, 2), (5, 4), (7, 6)]);
        for p in &pairs {
            assert_eq!(p.even_frame, p.odd_frame + 1);
            assert_eq!(p.target.get(0, 0), [p.odd_frame as u8, 0, 0]);
            let expected_depth = 2.0 + f32::from(p.even_frame);
            assert_eq!(p.condition.depth.get(50, 50), expected_depth);
            assert_eq!(p.condition.color.get(50, 50), [p.even_frame as u8, 0, 0]);
        }
    }

    #[test]
    fn training_pairs_cover_every_camera_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with_images(dir.path(), 8, &["CAM_A", "CAM_B"]);
        let frames: Vec<Vec<ScenePoint>> =
            (0..8).map(|_| vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])]).collect();
        let scene = scene_of(frames);
        let pairs = export_training_pairs(&scene, &manifest, 0).unwrap();
        assert_eq!(pairs.len(), 8);
        let order: Vec<(u16, u8)> =
            pairs.iter().map(|p| (p.odd_frame, p.camera_index)).collect();
        assert_eq!(
            order,
            vec![(0, 0), (0, 1), (2, 0), (2, 1), (4, 0), (4, 1), (6, 0), (6, 1)]
        );
    }

    #[test]
    fn training_pairs_ignore_a_trailing_unpaired_frame() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with_images(dir.path(), 3, &["CAM_A"]);
        let frames: Vec<Vec<ScenePoint>> =
            (0..3).map(|_| vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])]).collect();
        let pairs = export_training_pairs(&scene_of(frames), &manifest, 0).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].even_frame, pairs[0].odd_frame), (1, 0));
    }

    #[test]
    fn training_pairs_need_two_frames() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with_images(dir.path(), 1, &["CAM_A"]);
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])]]);
        assert!(matches!(
            export_training_pairs(&scene, &manifest, 0),
            Err(RenderError::TooFewFrames { frames: 1 })
        ));
    }

    #[test]
    fn training_pairs_use_the_odd_frame_camera_pose() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = manifest_with_images(dir.path(), 2, &["CAM_A"]);
        let frames = vec![
            vec![point_at([0.0, 0.0, 2.0], [1, 1, 1])],
            vec![point_at([2.0, 0.0, 10.0], [2, 2, 2])],
        ];
        let mut scene = scene_of(frames);
        scene.refined_poses[0] = RigidTransform::from_yaw(0.0, [2.0, 0.0, 0.0]);
        let pairs = export_training_pairs(&scene, &manifest, 0).unwrap();
        // The even point sits 2 m right of the world origin; the odd camera
        // is also 2 m right, so the point projects dead center.
        assert!(pairs[0].condition.occupancy.get(50, 50));
        assert_eq!(pairs[0].condition.color.get(50, 50), [2, 2, 2]);
    }

    #[test]
    fn save_render_writes_the_png_triple() {
        let dir = tempfile::tempdir().unwrap();
        let scene = scene_of(vec![vec![point_at([0.0, 0.0, 2.0], [9, 8, 7])]]);
        let render = render_keyframe(&scene, &control_for(&[0], 0)).unwrap();
        save_render(&render, dir.path(), "00000").unwrap();
        for suffix in ["color", "depth", "occ"] {
            assert!(dir.path().join(format!("00000_{suffix}.png")).is_file());
        }
        let depth = crate::scene_io::load_depth(
            &dir.path().join("00000_depth.png"),
            &test_intrinsics(),
        )
        .unwrap();
        assert_eq!(depth.get(50, 50), 2000);
        assert_eq!(depth.valid_count(), 1);
    }
}
