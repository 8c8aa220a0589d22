use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mapclean::dataset::{load_dataset, FRAMES_DIR, GT_FILE};
use mapclean::metrics::EvalReport;
use mapclean::synth::{Keyframe, LidarModel, Mover, SceneSpec, SensorPose, Shape};
use mapclean::LabelMask;
use tempfile::TempDir;

fn mapclean(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapclean"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mapclean(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = mapclean(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A few frames of a box crossing in front of a wall, sparse enough to be quick.
fn small_scene(tmp: &Path, name: &str, wall_x: f64) -> PathBuf {
    let mut lidar = LidarModel::uniform(16, -15.0, 15.0, 1.0, 60.0);
    lidar.noise_sigma = 0.003;
    let spec = SceneSpec {
        name: name.into(),
        statics: vec![
            Shape::Rect { min: [-20.0, -20.0], max: [20.0, 20.0], z: 0.02 },
            Shape::Box { min: [wall_x, -12.0, 0.02], max: [wall_x + 0.5, 12.0, 4.0] },
        ],
        dynamics: vec![Mover {
            shape: Shape::Box { min: [6.01, -4.99, 0.51], max: [8.0, -3.01, 2.19] },
            keyframes: vec![
                Keyframe { frame: 0.0, offset: [0.0; 3] },
                Keyframe { frame: 7.0, offset: [0.0, 8.0, 0.0] },
            ],
            active: None,
        }],
        sensor: (0..8).map(|_| SensorPose { position: [0.0, 0.0, 1.72], yaw_deg: 0.0 }).collect(),
        lidar,
        seed: 3,
    };
    let path = tmp.join(format!("{name}.json"));
    fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

fn synth_small(tmp: &Path, name: &str) -> PathBuf {
    let spec = small_scene(tmp, name, 12.01);
    let out = tmp.join(name);
    ok(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    out
}

fn frame_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir.join(FRAMES_DIR))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.push(dir.join(GT_FILE));
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn report(dir: &Path) -> EvalReport {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn synth_writes_dataset_layout_deterministically() {
    let tmp = TempDir::new().unwrap();
    let spec = small_scene(tmp.path(), "a", 12.01);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert_eq!(ok(&["synth", "--spec", s(&spec), "--out", s(&a)]).trim(), s(&a));
    ok(&["synth", "--spec", s(&spec), "--out", s(&b)]);
    ok(&["synth", "--spec", s(&spec), "--out", s(&c), "--seed", "99"]);
    assert!(a.join("manifest.json").is_file());
    let fa = frame_bytes(&a);
    assert_eq!(fa.len(), 9);
    assert!(fa[0].0.ends_with(".pcd"));
    assert_eq!(fa, frame_bytes(&b));
    assert_ne!(fa, frame_bytes(&c));
    assert_eq!(load_dataset(&a).unwrap().frames.len(), 8);
}

#[test]
fn synth_refuses_non_empty_output_without_force() {
    let tmp = TempDir::new().unwrap();
    let spec = small_scene(tmp.path(), "a", 12.01);
    let out = tmp.path().join("a");
    ok(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    let err = fails(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    assert!(err.contains("--force"), "{err}");
    ok(&["synth", "--spec", s(&spec), "--out", s(&out), "--force"]);
}

#[test]
fn unknown_preset_lists_the_available_ones() {
    let tmp = TempDir::new().unwrap();
    let err = fails(&["synth", "--preset", "nope", "--out", s(&tmp.path().join("x"))]);
    for name in ["grazing_ground", "open_truck", "street_mixed", "semi_indoor_16beam", "tree_pedestrian"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = TempDir::new().unwrap();
    let data = synth_small(tmp.path(), "d");
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[removert]\ntau_dd = 0.2\n").unwrap();
    let err = fails(&["run", "removert", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&tmp.path().join("r"))]);
    assert!(err.contains("tau_dd"), "{err}");
}

#[test]
fn offline_methods_need_the_raw_map() {
    let tmp = TempDir::new().unwrap();
    let data = synth_small(tmp.path(), "d");
    fs::remove_file(data.join(GT_FILE)).unwrap();
    for m in ["removert", "erasor"] {
        let err = fails(&["run", m, "--dataset", s(&data), "--out", s(&tmp.path().join(m))]);
        assert!(err.contains(GT_FILE), "{err}");
    }
    // Octomap works from the scans alone.
    ok(&["run", "octomap", "--dataset", s(&data), "--out", s(&tmp.path().join("o"))]);
}

#[test]
fn run_eval_compare_round_trip() {
    let tmp = TempDir::new().unwrap();
    let data = synth_small(tmp.path(), "d");
    let gt = load_dataset(&data).unwrap().gt.unwrap();
    let mut runs = Vec::new();
    for m in ["removert", "erasor", "octomap", "octomap_g", "octomap_gf"] {
        let dir = tmp.path().join(m);
        ok(&["run", m, "--dataset", s(&data), "--out", s(&dir)]);
        let mask = LabelMask::from_bytes(&fs::read(dir.join("label_mask.bin")).unwrap()).unwrap();
        assert_eq!(mask.len(), gt.len());
        for f in ["static_map.pcd", "timings.csv", "run_manifest.json"] {
            assert!(dir.join(f).is_file(), "{m}: {f}");
        }
        let printed = ok(&["eval", "--dataset", s(&data), "--run", s(&dir)]);
        assert_eq!(printed.lines().count(), 3);
        let r = report(&dir);
        assert_eq!(r.method, m);
        assert!((r.aa * r.aa - r.sa * r.da).abs() < 1e-9);
        assert!(r.runtime.unwrap().mean_s >= 0.0);
        let csv = fs::read_to_string(dir.join("report.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        runs.push(dir);
    }
    let mut args = vec!["compare"];
    args.extend(runs.iter().map(|p| s(p)));
    let table = ok(&args);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("method,SA,DA,AA"));
    assert!(lines[1].starts_with("removert,"));

    // A run of a different dataset cannot be mixed in.
    let other_spec = small_scene(tmp.path(), "e", 13.01);
    let other = tmp.path().join("e");
    ok(&["synth", "--spec", s(&other_spec), "--out", s(&other)]);
    let odir = tmp.path().join("other_run");
    ok(&["run", "octomap", "--dataset", s(&other), "--out", s(&odir)]);
    ok(&["eval", "--dataset", s(&other), "--run", s(&odir)]);
    let err = fails(&["compare", s(&runs[0]), s(&odir)]);
    assert!(err.contains("different dataset"), "{err}");
}

#[test]
fn eval_of_perfect_and_empty_masks() {
    let tmp = TempDir::new().unwrap();
    let data = synth_small(tmp.path(), "d");
    let gt = load_dataset(&data).unwrap().gt.unwrap();
    let dir = tmp.path().join("r");
    ok(&["run", "octomap", "--dataset", s(&data), "--out", s(&dir)]);

    fs::write(dir.join("label_mask.bin"), LabelMask::new(gt.labels().to_vec()).to_bytes()).unwrap();
    ok(&["eval", "--dataset", s(&data), "--run", s(&dir)]);
    let r = report(&dir);
    assert_eq!((r.sa, r.da, r.aa), (100.0, 100.0, 100.0));

    let none = vec![mapclean::Label::Static; gt.len()];
    fs::write(dir.join("label_mask.bin"), LabelMask::new(none).to_bytes()).unwrap();
    ok(&["eval", "--dataset", s(&data), "--run", s(&dir)]);
    let r = report(&dir);
    assert_eq!((r.sa, r.da, r.aa), (100.0, 0.0, 0.0));

    fs::remove_file(dir.join("label_mask.bin")).unwrap();
    fails(&["eval", "--dataset", s(&data), "--run", s(&dir)]);
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let data = synth_small(tmp.path(), "d");
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[octomap]\np_hit = 0.75\n").unwrap();
    let first = tmp.path().join("first");
    ok(&["run", "octomap_gf", "--dataset", s(&data), "--config", s(&cfg), "--seed", "7", "--out", s(&first)]);
    let again = tmp.path().join("again");
    ok(&["run", "--manifest", s(&first.join("run_manifest.json")), "--out", s(&again)]);
    for f in ["static_map.pcd", "label_mask.bin"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(first.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("p_hit = 0.75") && manifest.contains("seed = 7"), "{manifest}");

    // Changing the dataset invalidates the manifest.
    fs::remove_file(data.join(GT_FILE)).unwrap();
    let err = fails(&["run", "--manifest", s(&first.join("run_manifest.json")), "--out", s(&tmp.path().join("x"))]);
    assert!(err.contains("changed"), "{err}");
}
