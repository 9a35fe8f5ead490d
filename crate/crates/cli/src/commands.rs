//! Subcommand implementations.
//!
//! Each command reads its inputs, delegates to the library pipeline, writes
//! artifacts under the output directory, and returns a one-line JSON
//! summary for standard output. Nothing here mutates an input path.

use crate::config::{
    load_config, EvalConfig, ExportConfig, JobConfig, RemovalConfig, SynthJob, TrajectoryMode,
    TrajectorySpec,
};
use crate::error::{input, processing, CliError};
use rayon::prelude::*;
use scene4d::alignment::{build_scene4d, AlignmentError, Scene4D};
use scene4d::geometry::RigidTransform;
use scene4d::reconstruction::{
    fuse_frame, lift_view, mark_dynamic, voxel_downsample, FramePointCloud, RigConfig,
};
use scene4d::rendering::{
    export_training_pairs, remove_objects, render_frozen_space, render_frozen_time,
    render_keyframe, save_render, KeyframeRender, RenderControl,
};
use scene4d::scene_io::{load_color, load_depth, save_color, SceneArtifact, SceneManifest};
use scene4d::synth_oracle::{generate, perturb_poses, GroundTruth, SynthError, MANIFEST_FILE};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Maps an alignment error to an exit class: rejected configuration is the
/// caller's fault, anything else failed during processing.
fn alignment_error(e: AlignmentError) -> CliError {
    match e {
        AlignmentError::InvalidConfig(_) => input(e),
        _ => processing(e),
    }
}

fn removed_points(scene: &Scene4D) -> usize {
    scene
        .frames
        .iter()
        .map(|f| f.points.iter().filter(|p| p.is_removed()).count())
        .sum()
}

fn write_pretty_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let bytes = serde_json::to_vec_pretty(value).expect("index serializes");
    std::fs::write(path, bytes)
        .map_err(|e| processing(format!("cannot write {}: {e}", path.display())))
}

/// Lifts, fuses, annotates, and optionally downsamples every frame of a
/// manifest into per-frame ego clouds.
fn reconstruct_frames(
    manifest: &SceneManifest,
    stride: u32,
    voxel: f64,
) -> Result<Vec<FramePointCloud>, CliError> {
    manifest
        .frames
        .par_iter()
        .map(|frame| {
            let views = frame
                .cameras
                .iter()
                .enumerate()
                .map(|(camera_index, cam)| {
                    let depth = load_depth(&manifest.resolve(&cam.depth_path), &cam.intrinsics)
                        .map_err(input)?;
                    let image = load_color(&manifest.resolve(&cam.image_path)).map_err(input)?;
                    lift_view(
                        &depth,
                        &image,
                        &cam.intrinsics,
                        &cam.cam_to_ego,
                        stride,
                        frame.index as u16,
                        camera_index as u8,
                    )
                    .map_err(input)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let mut fused = fuse_frame(views, frame).map_err(input)?;
            mark_dynamic(&mut fused, &frame.dynamic_boxes).map_err(input)?;
            if voxel > 0.0 {
                fused = voxel_downsample(&fused, voxel);
            }
            Ok(fused)
        })
        .collect()
}

pub fn cmd_build(
    manifest_arg: Option<PathBuf>,
    out_arg: Option<PathBuf>,
    config_arg: Option<PathBuf>,
) -> Result<Value, CliError> {
    let cfg: JobConfig = match &config_arg {
        Some(path) => load_config(path)?,
        None => JobConfig::default(),
    };
    cfg.validate()?;
    cfg.alignment.validate().map_err(input)?;
    let manifest_path = manifest_arg
        .or(cfg.manifest)
        .ok_or_else(|| CliError::Input("no manifest path given (argument or config)".into()))?;
    let out_dir = out_arg
        .or(cfg.output_dir)
        .ok_or_else(|| CliError::Input("no output directory given (argument or config)".into()))?;
    let manifest = SceneManifest::load(&manifest_path).map_err(input)?;
    let rig = RigConfig::from_manifest(&manifest);
    log::info!(
        "building scene {:?}: {} frames, {} cameras",
        manifest.scene_id,
        manifest.frames.len(),
        rig.cameras.len()
    );
    let frames = reconstruct_frames(&manifest, cfg.lift_stride, cfg.voxel)?;
    let lifted: usize = frames.iter().map(|f| f.points.len()).sum();
    log::info!("lifted {lifted} points across {} frames", frames.len());
    let poses: Vec<RigidTransform> = manifest.frames.iter().map(|f| f.ego_pose).collect();
    let mut scene = build_scene4d(frames, &poses, &cfg.alignment).map_err(alignment_error)?;
    let converged = scene.reports.iter().filter(|r| r.converged).count();
    log::info!("aligned {} frames, {} converged", scene.frames.len(), converged);
    let mut flagged = 0;
    if let Some(boxes_path) = &cfg.removal_boxes {
        let removal: RemovalConfig = load_config(boxes_path)?;
        removal.validate()?;
        let removed_scene = remove_objects(&scene, &removal.boxes);
        flagged = removed_points(&removed_scene) - removed_points(&scene);
        log::info!("flagged {flagged} points as removed");
        scene = removed_scene;
    }
    let points: usize = scene.frames.iter().map(|f| f.points.len()).sum();
    let artifact = SceneArtifact {
        scene_id: manifest.scene_id.clone(),
        rig,
        scene,
    };
    artifact.save(&out_dir).map_err(processing)?;
    Ok(json!({
        "scene_id": manifest.scene_id,
        "frames": manifest.frames.len(),
        "points": points,
        "converged_frames": converged,
        "removed_points": flagged,
        "out_dir": out_dir.display().to_string(),
    }))
}

#[derive(Serialize)]
struct RenderEntry {
    seq: usize,
    time_selector: Vec<u16>,
    camera_pose: RigidTransform,
    color: String,
    depth: String,
    occupancy: String,
}

#[derive(Serialize)]
struct RenderIndex {
    mode: String,
    camera: String,
    base_frame: u16,
    splat_radius: u32,
    renders: Vec<RenderEntry>,
}

pub fn cmd_render(
    scene_dir: PathBuf,
    out_dir: PathBuf,
    config: PathBuf,
) -> Result<Value, CliError> {
    let traj: TrajectorySpec = load_config(&config)?;
    traj.validate()?;
    let artifact = SceneArtifact::load(&scene_dir).map_err(input)?;
    let camera = artifact
        .rig
        .cameras
        .iter()
        .find(|c| c.name == traj.camera)
        .ok_or_else(|| CliError::Input(format!("camera {:?} is not on the rig", traj.camera)))?;
    if usize::from(traj.base_frame) >= artifact.scene.frames.len() {
        return Err(CliError::Input(format!(
            "base_frame {} out of range for {} frames",
            traj.base_frame,
            artifact.scene.frames.len()
        )));
    }
    let base_pose =
        artifact.scene.refined_poses[usize::from(traj.base_frame)].compose(&camera.cam_to_ego);
    let intrinsics = traj.intrinsics.unwrap_or(camera.intrinsics);
    let states: Vec<(RigidTransform, u16)> = traj
        .steps
        .iter()
        .map(|step| {
            let pose = match &step.pose_delta {
                Some(delta) => base_pose.compose(delta),
                None => base_pose,
            };
            (pose, step.time.unwrap_or(traj.base_frame))
        })
        .collect();
    let renders: Vec<KeyframeRender> = match traj.mode {
        TrajectoryMode::FrozenTime => {
            let poses: Vec<RigidTransform> = states.iter().map(|(pose, _)| *pose).collect();
            render_frozen_time(
                &artifact.scene,
                traj.base_frame,
                &poses,
                &intrinsics,
                traj.splat_radius,
            )
            .map_err(input)?
        }
        TrajectoryMode::FrozenSpace => {
            let times: Vec<u16> = states.iter().map(|(_, time)| *time).collect();
            render_frozen_space(
                &artifact.scene,
                &base_pose,
                &times,
                &intrinsics,
                traj.splat_radius,
            )
            .map_err(input)?
        }
        TrajectoryMode::Free => states
            .par_iter()
            .map(|(pose, time)| {
                let control =
                    RenderControl::new(*pose, intrinsics, vec![*time], traj.splat_radius)?;
                render_keyframe(&artifact.scene, &control)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(input)?,
    };
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| processing(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut entries = Vec::with_capacity(renders.len());
    for (seq, (render, (pose, time))) in renders.iter().zip(&states).enumerate() {
        let stem = format!("{seq:05}");
        save_render(render, &out_dir, &stem).map_err(processing)?;
        entries.push(RenderEntry {
            seq,
            time_selector: vec![*time],
            camera_pose: *pose,
            color: format!("{stem}_color.png"),
            depth: format!("{stem}_depth.png"),
            occupancy: format!("{stem}_occ.png"),
        });
    }
    let index = RenderIndex {
        mode: match traj.mode {
            TrajectoryMode::FrozenTime => "frozen_time".into(),
            TrajectoryMode::FrozenSpace => "frozen_space".into(),
            TrajectoryMode::Free => "free".into(),
        },
        camera: traj.camera.clone(),
        base_frame: traj.base_frame,
        splat_radius: traj.splat_radius,
        renders: entries,
    };
    write_pretty_json(&index, &out_dir.join("render_index.json"))?;
    log::info!("rendered {} keyframes to {}", renders.len(), out_dir.display());
    Ok(json!({
        "renders": renders.len(),
        "out_dir": out_dir.display().to_string(),
    }))
}

#[derive(Serialize)]
struct PairEntry {
    pair: u16,
    even_frame: u16,
    odd_frame: u16,
    camera: String,
    condition_color: String,
    condition_depth: String,
    condition_occupancy: String,
    target: String,
}

pub fn cmd_export_pairs(
    scene_dir: PathBuf,
    manifest_path: PathBuf,
    out_dir: PathBuf,
    config_arg: Option<PathBuf>,
) -> Result<Value, CliError> {
    let cfg: ExportConfig = match &config_arg {
        Some(path) => load_config(path)?,
        None => ExportConfig::default(),
    };
    let artifact = SceneArtifact::load(&scene_dir).map_err(input)?;
    let manifest = SceneManifest::load(&manifest_path).map_err(input)?;
    let pairs =
        export_training_pairs(&artifact.scene, &manifest, cfg.splat_radius).map_err(input)?;
    let cond_dir = out_dir.join("cond");
    let gt_dir = out_dir.join("gt");
    for dir in [&cond_dir, &gt_dir] {
        std::fs::create_dir_all(dir)
            .map_err(|e| processing(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut entries = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let camera = &manifest.rig[usize::from(pair.camera_index)];
        let stem = format!("{:03}_{camera}", pair.odd_frame / 2);
        save_render(&pair.condition, &cond_dir, &stem).map_err(processing)?;
        let target = format!("{stem}.png");
        save_color(&pair.target, &gt_dir.join(&target)).map_err(processing)?;
        entries.push(PairEntry {
            pair: pair.odd_frame / 2,
            even_frame: pair.even_frame,
            odd_frame: pair.odd_frame,
            camera: camera.clone(),
            condition_color: format!("cond/{stem}_color.png"),
            condition_depth: format!("cond/{stem}_depth.png"),
            condition_occupancy: format!("cond/{stem}_occ.png"),
            target: format!("gt/{target}"),
        });
    }
    write_pretty_json(&entries, &out_dir.join("pairs.json"))?;
    log::info!("exported {} training pairs to {}", pairs.len(), out_dir.display());
    Ok(json!({
        "pairs": pairs.len(),
        "out_dir": out_dir.display().to_string(),
    }))
}

pub fn cmd_remove(
    scene_dir: PathBuf,
    out_dir: PathBuf,
    config: PathBuf,
) -> Result<Value, CliError> {
    let removal: RemovalConfig = load_config(&config)?;
    removal.validate()?;
    let artifact = SceneArtifact::load(&scene_dir).map_err(input)?;
    let before = removed_points(&artifact.scene);
    let scene = remove_objects(&artifact.scene, &removal.boxes);
    let after = removed_points(&scene);
    log::info!(
        "flagged {} points as removed ({} total carry the flag)",
        after - before,
        after
    );
    let output = SceneArtifact {
        scene_id: artifact.scene_id.clone(),
        rig: artifact.rig,
        scene,
    };
    output.save(&out_dir).map_err(processing)?;
    Ok(json!({
        "scene_id": output.scene_id,
        "removed_points": after - before,
        "total_removed": after,
        "out_dir": out_dir.display().to_string(),
    }))
}

pub fn cmd_eval(
    render_dir: PathBuf,
    gt_dir: PathBuf,
    out_dir: PathBuf,
    config_arg: Option<PathBuf>,
) -> Result<Value, CliError> {
    let cfg: EvalConfig = match &config_arg {
        Some(path) => load_config(path)?,
        None => EvalConfig::default(),
    };
    let report =
        scene4d::evaluation::evaluate_sequence(&render_dir, &gt_dir, cfg.masked).map_err(input)?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| processing(format!("cannot create {}: {e}", out_dir.display())))?;
    write_pretty_json(&report, &out_dir.join("metrics.json"))?;
    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, report.to_csv())
        .map_err(|e| processing(format!("cannot write {}: {e}", csv_path.display())))?;
    log::info!(
        "evaluated {} images: psnr {:.4} dB, ssim {:.6}",
        report.per_image.len(),
        report.aggregate.psnr_db,
        report.aggregate.ssim
    );
    Ok(json!({
        "images": report.per_image.len(),
        "masked": report.masked,
        "psnr_db": report.aggregate.psnr_db,
        "ssim": report.aggregate.ssim,
        "out_dir": out_dir.display().to_string(),
    }))
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::InvalidSpec(_) => input(e),
        _ => processing(e),
    }
}

pub fn cmd_synth(out_dir: PathBuf, config: PathBuf) -> Result<Value, CliError> {
    let job: SynthJob = load_config(&config)?;
    let manifest = generate(&job.spec, &out_dir).map_err(synth_error)?;
    let mut perturbed = false;
    if let Some(perturb) = &job.perturb {
        perturb.validate()?;
        let seed = perturb.seed.unwrap_or(job.spec.seed);
        let (shifted, perturbations) =
            perturb_poses(&manifest, perturb.rot_deg, perturb.trans_m, seed);
        shifted
            .save(&out_dir.join(MANIFEST_FILE))
            .map_err(processing)?;
        let mut truth = GroundTruth::load(&out_dir).map_err(processing)?;
        truth.perturbations = perturbations;
        truth.save(&out_dir).map_err(processing)?;
        perturbed = true;
        log::info!(
            "perturbed manifest poses by up to {} deg / {} m (seed {seed})",
            perturb.rot_deg,
            perturb.trans_m
        );
    }
    log::info!(
        "generated scene {:?}: {} frames, {} cameras",
        manifest.scene_id,
        manifest.frames.len(),
        manifest.rig.len()
    );
    Ok(json!({
        "scene_id": manifest.scene_id,
        "frames": manifest.frames.len(),
        "cameras": manifest.rig.len(),
        "perturbed": perturbed,
        "out_dir": out_dir.display().to_string(),
    }))
}
