//! End-to-end tests of the binary: exit codes, output layout, summary
//! JSON, and rerun stability.

use scene4d::geometry::{CameraIntrinsics, OrientedBox, Point3, RigidTransform};
use scene4d::scene_io::{SceneArtifact, SceneManifest};
use scene4d::synth_oracle::{
    forward_camera, generate, CameraMount, EgoMotion, GroundPlane, GroundTruth, SynthObject,
    SynthSpec,
};
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scene4d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is one-line JSON")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited")
}

fn yawed_camera(name: &str, intrinsics: CameraIntrinsics, yaw: f64) -> CameraMount {
    let level = forward_camera(name, intrinsics, [0.0, 0.0, 0.0]);
    CameraMount {
        name: level.name,
        intrinsics,
        cam_to_ego: RigidTransform::from_yaw(yaw, [0.0, 0.0, 1.6]).compose(&level.cam_to_ego),
    }
}

fn test_spec(frame_count: usize, camera_count: usize) -> SynthSpec {
    let intrinsics = CameraIntrinsics::new(60.0, 60.0, 32.0, 24.0, 64, 48).unwrap();
    let rig = (0..camera_count)
        .map(|i| yawed_camera(&format!("cam{i}"), intrinsics, i as f64 * 0.7))
        .collect();
    SynthSpec {
        scene_id: "cli-test".into(),
        seed: 5,
        frame_count,
        frame_dt: 0.2,
        rig,
        ego: EgoMotion {
            speed: 1.25,
            yaw_rate: 0.05,
        },
        objects: vec![
            SynthObject {
                center: Point3::new(8.0, 1.0, 0.5),
                half_extents: [0.5; 3],
                yaw: 0.0,
                color: [255, 0, 0],
                velocity: [0.0; 3],
                dynamic: false,
            },
            SynthObject {
                center: Point3::new(6.0, -2.0, 0.75),
                half_extents: [0.6, 0.4, 0.75],
                yaw: 0.4,
                color: [0, 200, 80],
                velocity: [0.0; 3],
                dynamic: false,
            },
        ],
        ground: Some(GroundPlane {
            checker_size: 1.0,
            color_a: [200, 200, 200],
            color_b: [60, 60, 60],
        }),
    }
}

fn make_scene(dir: &Path, frame_count: usize, camera_count: usize) -> SceneManifest {
    generate(&test_spec(frame_count, camera_count), dir).unwrap()
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("cannot read {}: {e}", p.display()))
}

#[test]
fn build_and_render_produce_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 4, 1);
    let built = dir.path().join("built");
    let summary = run_ok(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&built),
    ]);
    assert_eq!(summary["frames"], 4);
    assert_eq!(summary["converged_frames"], 4);
    for file in ["cloud.stg4", "scene.json", "alignment.json"] {
        assert!(built.join(file).is_file(), "{file} missing");
    }

    let traj = dir.path().join("traj.json");
    let steps: Vec<serde_json::Value> = (0..5)
        .map(|i| {
            serde_json::json!({"pose_delta": {
                "rotation": [1.0, 0.0, 0.0, 0.0],
                "translation": [0.25 * f64::from(i), 0.0, 0.0],
            }})
        })
        .collect();
    std::fs::write(
        &traj,
        serde_json::json!({
            "mode": "frozen_time",
            "base_frame": 0,
            "camera": "cam0",
            "splat_radius": 1,
            "steps": steps,
        })
        .to_string(),
    )
    .unwrap();
    let renders = dir.path().join("renders");
    let summary = run_ok(&[
        "render",
        &path_str(&built),
        &path_str(&renders),
        "--config",
        &path_str(&traj),
    ]);
    assert_eq!(summary["renders"], 5);
    for seq in 0..5 {
        for kind in ["color", "depth", "occ"] {
            let file = renders.join(format!("{seq:05}_{kind}.png"));
            assert!(file.is_file(), "{} missing", file.display());
        }
    }
    assert!(renders.join("render_index.json").is_file());

    let fs_traj = dir.path().join("fs.json");
    std::fs::write(
        &fs_traj,
        serde_json::json!({
            "mode": "frozen_space",
            "base_frame": 0,
            "camera": "cam0",
            "steps": [{"time": 0}, {"time": 1}, {"time": 2}, {"time": 3}],
        })
        .to_string(),
    )
    .unwrap();
    let sequence = dir.path().join("sequence");
    let summary = run_ok(&[
        "render",
        &path_str(&built),
        &path_str(&sequence),
        "--config",
        &path_str(&fs_traj),
    ]);
    assert_eq!(summary["renders"], 4);
}

#[test]
fn missing_inputs_exit_2_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "build",
        &path_str(&dir.path().join("absent.json")),
        &path_str(&dir.path().join("out")),
    ]);
    assert_eq!(exit_code(&out), 2);

    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 2, 1);
    let depth = scene_dir.join("frames/000001/cam0_depth.png");
    std::fs::remove_file(&depth).unwrap();
    let out = run(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&dir.path().join("out")),
    ]);
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("cam0_depth.png"),
        "stderr does not name the missing file: {stderr}"
    );
}

#[test]
fn build_exits_3_when_output_cannot_be_created() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 2, 1);
    let blocked = dir.path().join("blocked");
    std::fs::write(&blocked, b"in the way").unwrap();
    let out = run(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&blocked.join("out")),
    ]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn invalid_trajectories_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 2, 1);
    let built = dir.path().join("built");
    run_ok(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&built),
    ]);

    let bad_traj = dir.path().join("bad.json");
    std::fs::write(
        &bad_traj,
        serde_json::json!({
            "mode": "frozen_time",
            "base_frame": 0,
            "camera": "cam0",
            "steps": [{"time": 1}],
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&[
        "render",
        &path_str(&built),
        &path_str(&dir.path().join("r")),
        "--config",
        &path_str(&bad_traj),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("frozen_time"));

    let typo = dir.path().join("typo.json");
    std::fs::write(&typo, br#"{"lift_strides": 2}"#).unwrap();
    let out = run(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&dir.path().join("o2")),
        "--config",
        &path_str(&typo),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn reruns_rewrite_byte_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 3, 2);
    let manifest = path_str(&scene_dir.join("manifest.json"));
    let built_a = dir.path().join("ba");
    let built_b = dir.path().join("bb");
    run_ok(&["build", &manifest, &path_str(&built_a)]);
    run_ok(&["build", &manifest, &path_str(&built_b)]);
    for file in ["cloud.stg4", "scene.json", "alignment.json"] {
        assert_eq!(
            read(&built_a.join(file)),
            read(&built_b.join(file)),
            "{file} differs between reruns"
        );
    }

    let traj = dir.path().join("traj.json");
    std::fs::write(
        &traj,
        serde_json::json!({
            "mode": "frozen_space",
            "base_frame": 0,
            "camera": "cam1",
            "steps": [{"time": 0}, {"time": 2}],
        })
        .to_string(),
    )
    .unwrap();
    let render_a = dir.path().join("ra");
    let render_b = dir.path().join("rb");
    for out in [&render_a, &render_b] {
        run_ok(&[
            "render",
            &path_str(&built_a),
            &path_str(out),
            "--config",
            &path_str(&traj),
        ]);
    }
    for entry in std::fs::read_dir(&render_a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            read(&render_a.join(&name)),
            read(&render_b.join(&name)),
            "{name:?} differs between reruns"
        );
    }
}

#[test]
fn remove_matches_brute_force_containment() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 2, 1);
    let built = dir.path().join("built");
    run_ok(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&built),
    ]);
    let artifact = SceneArtifact::load(&built).unwrap();
    let probe = OrientedBox::new(Point3::new(8.0, 1.0, 0.5), [0.7, 0.7, 0.7], 0.0);
    let expected: usize = artifact
        .scene
        .frames
        .iter()
        .map(|f| f.points.iter().filter(|p| probe.contains(p.position)).count())
        .sum();
    assert!(expected > 0, "probe box is empty; fixture is wrong");

    let config = dir.path().join("boxes.json");
    std::fs::write(
        &config,
        serde_json::json!({"boxes": [{
            "center": [8.0, 1.0, 0.5],
            "half_extents": [0.7, 0.7, 0.7],
            "yaw": 0.0,
            "frame_range": [0, 1],
        }]})
        .to_string(),
    )
    .unwrap();
    let removed_dir = dir.path().join("removed");
    let summary = run_ok(&[
        "remove",
        &path_str(&built),
        &path_str(&removed_dir),
        "--config",
        &path_str(&config),
    ]);
    assert_eq!(summary["removed_points"], expected);
    let removed = SceneArtifact::load(&removed_dir).unwrap();
    let flagged: usize = removed
        .scene
        .frames
        .iter()
        .map(|f| f.points.iter().filter(|p| p.is_removed()).count())
        .sum();
    assert_eq!(flagged, expected);
}

#[test]
fn export_pairs_counts_and_layout() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 4, 2);
    let built = dir.path().join("built");
    run_ok(&[
        "build",
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&built),
    ]);
    let pairs_dir = dir.path().join("pairs");
    let summary = run_ok(&[
        "export-pairs",
        &path_str(&built),
        &path_str(&scene_dir.join("manifest.json")),
        &path_str(&pairs_dir),
    ]);
    assert_eq!(summary["pairs"], 4);
    let index: serde_json::Value =
        serde_json::from_slice(&read(&pairs_dir.join("pairs.json"))).unwrap();
    let entries = index.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    for entry in entries {
        for key in ["condition_color", "condition_depth", "condition_occupancy", "target"] {
            let rel = entry[key].as_str().unwrap();
            assert!(
                pairs_dir.join(rel).is_file(),
                "{rel} listed in the index but missing"
            );
        }
        let odd = entry["odd_frame"].as_u64().unwrap();
        assert_eq!(entry["even_frame"].as_u64().unwrap(), odd + 1);
    }
}

#[test]
fn eval_reports_capped_metrics_for_identical_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let scene_dir = dir.path().join("scene");
    make_scene(&scene_dir, 2, 1);
    let render_dir = dir.path().join("renders");
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir_all(&render_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    for frame in 0..2 {
        let image = scene_dir.join(format!("frames/{frame:06}/cam0_color.png"));
        std::fs::copy(&image, render_dir.join(format!("{frame:05}_color.png"))).unwrap();
        std::fs::copy(&image, gt_dir.join(format!("{frame:05}.png"))).unwrap();
    }
    let metrics = dir.path().join("metrics");
    let summary = run_ok(&[
        "eval",
        &path_str(&render_dir),
        &path_str(&gt_dir),
        &path_str(&metrics),
    ]);
    assert_eq!(summary["images"], 2);
    assert_eq!(summary["psnr_db"], 99.0);
    assert_eq!(summary["ssim"], 1.0);
    assert!(metrics.join("metrics.json").is_file());
    let csv = String::from_utf8(read(&metrics.join("metrics.csv"))).unwrap();
    assert!(csv.starts_with("name,psnr_db,ssim\n"));
    assert!(csv.trim_end().ends_with("aggregate,99,1"));
}

#[test]
fn synth_perturb_records_sidecar_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("synth.json");
    let spec = test_spec(3, 1);
    std::fs::write(
        &config,
        serde_json::to_string(&serde_json::json!({
            "spec": spec,
            "perturb": {"rot_deg": 1.0, "trans_m": 0.1},
        }))
        .unwrap(),
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let summary = run_ok(&["synth", &path_str(&out_a), "--config", &path_str(&config)]);
    assert_eq!(summary["perturbed"], true);
    run_ok(&["synth", &path_str(&out_b), "--config", &path_str(&config)]);
    assert_eq!(
        read(&out_a.join("manifest.json")),
        read(&out_b.join("manifest.json"))
    );
    assert_eq!(
        read(&out_a.join("ground_truth.json")),
        read(&out_b.join("ground_truth.json"))
    );

    let manifest = SceneManifest::load(&out_a.join("manifest.json")).unwrap();
    let truth = GroundTruth::load(&out_a).unwrap();
    assert_eq!(truth.ego_poses[0], manifest.frames[0].ego_pose);
    let mut shifted = 0;
    for (frame, (exact, perturbation)) in manifest
        .frames
        .iter()
        .zip(truth.ego_poses.iter().zip(&truth.perturbations))
    {
        let (rot, trans) = frame.ego_pose.difference(&perturbation.compose(exact));
        assert!(rot < 1e-12 && trans < 1e-12, "pose drifted: {rot}, {trans}");
        if *perturbation != RigidTransform::identity() {
            shifted += 1;
        }
    }
    assert_eq!(shifted, 2);
}
