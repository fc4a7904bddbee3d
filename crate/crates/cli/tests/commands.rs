use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use ps3d::dataset::{Dataset, Split};
use ps3d::features::PyramidConfig;
use ps3d::inference::{infer_frame, read_detections, write_detections, DetectionRecord, InferConfig, PartState, PoseDetection, PruneMode};
use ps3d::learning::{train, TrainConfig};
use ps3d::model::{load_model, serialize_model, Variant};
use ps3d::synthgen::{DatasetConfig, SceneConfig};
use ps3d_cli::{cmd_bench, cmd_eval, cmd_gen_data, cmd_infer, cmd_train, frame_id, log_path, InferOptions, DETECTIONS_FILE};

fn dataset(dir: &Path) -> PathBuf {
    let root = dir.join("data");
    let cfg = DatasetConfig { frames: 8, test_fraction: 0.25, negatives: 2, seed: 21, scene: SceneConfig::default() };
    cmd_gen_data(&cfg, &root).unwrap();
    root
}

fn tiny(variant: Variant, epochs: usize) -> TrainConfig {
    TrainConfig { variant, types: 2, epochs, pyramid: PyramidConfig { max_levels: 2, ..PyramidConfig::default() }, ..TrainConfig::default() }
}

fn records(path: &Path) -> Vec<DetectionRecord> {
    read_detections(BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn gen_data_is_deterministic_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let a = dataset(dir.path());
    let b = dir.path().join("again");
    let cfg = DatasetConfig { frames: 8, test_fraction: 0.25, negatives: 2, seed: 21, scene: SceneConfig::default() };
    cmd_gen_data(&cfg, &b).unwrap();
    for name in ["manifest.json", "frame_00000.json", "frame_00000.depth.png", "frame_00009.color.png"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let ds = Dataset::load(&a).unwrap();
    assert_eq!([ds.split(Split::Train).len(), ds.split(Split::Test).len(), ds.split(Split::Negative).len()], [6, 2, 2]);

    let empty = DatasetConfig { frames: 0, negatives: 0, ..cfg };
    let ds = cmd_gen_data(&empty, &dir.path().join("empty")).unwrap();
    assert!(ds.entries.is_empty());
}

#[test]
fn zero_epochs_write_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let model = dir.path().join("m").join("init.bin");
    let cfg = tiny(Variant::Psi2d, 0);
    let out = cmd_train(&data, &cfg, &model).unwrap();
    assert!(out.log.is_empty());

    let ds = Dataset::load(&data).unwrap();
    let load = |s| ds.split(s).into_iter().map(|e| ds.load_frame(e).unwrap()).collect::<Vec<_>>();
    let direct = train(&load(Split::Train), &load(Split::Negative), &cfg).unwrap();
    assert_eq!(fs::read(&model).unwrap(), serialize_model(&direct.model).unwrap());
    assert!(fs::read_to_string(log_path(&model)).unwrap().starts_with('#'));
}

#[test]
fn infer_matches_the_library_and_round_trips_through_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let model_path = dir.path().join("model.bin");
    cmd_train(&data, &tiny(Variant::Psi3d4, 1), &model_path).unwrap();
    let opts = InferOptions { overlays: true, ..InferOptions::default() };
    let out = dir.path().join("infer");
    let written = cmd_infer(&data, &model_path, &opts, &out).unwrap();

    let model = load_model(&model_path).unwrap();
    let ds = Dataset::load(&data).unwrap();
    let mut expected = Vec::new();
    for e in ds.split(Split::Test) {
        let dets = infer_frame(&model, &ds.load_frame(e).unwrap(), &InferConfig::default()).unwrap();
        expected.extend(dets.into_iter().map(|detection| DetectionRecord { frame_id: frame_id(e.id), detection }));
        assert!(out.join("overlays").join(format!("{}.png", frame_id(e.id))).exists());
    }
    assert_eq!(written, expected);
    let read = records(&out.join(DETECTIONS_FILE));
    assert_eq!(read.len(), expected.len());
    assert!(read.iter().zip(&expected).all(|(a, b)| a.frame_id == b.frame_id && a.detection.score == b.detection.score));

    let report = cmd_eval(&data, Split::Test, &[("run".into(), out.join(DETECTIONS_FILE))], &dir.path().join("eval")).unwrap();
    assert_eq!(report.runs.len(), 1);
    for f in ["pck.txt", "ap.txt", "pr_curve.svg", "results.json"] {
        assert!(dir.path().join("eval").join(f).exists(), "{f}");
    }
}

#[test]
fn ground_truth_detections_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let ds = Dataset::load(&data).unwrap();
    let mut recs = Vec::new();
    for e in ds.split(Split::Test) {
        for (k, a) in ds.load_frame(e).unwrap().annotations.iter().enumerate() {
            let parts = a.joints.iter().map(|j| PartState { col: 0, row: 0, ty: 0, u: j.u, v: j.v }).collect();
            let detection = PoseDetection { level: 0, score: 1.0 + k as f64, parts, bbox: a.bbox };
            recs.push(DetectionRecord { frame_id: frame_id(e.id), detection });
        }
    }
    let path = dir.path().join("truth.txt");
    let mut buf = Vec::new();
    write_detections(&recs, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    let report = cmd_eval(&data, Split::Test, &[("truth".into(), path)], &dir.path().join("eval")).unwrap();
    let r = &report.runs[0];
    assert_eq!(r.ap_all.ap, 1.0);
    assert_eq!(r.ap_normal.ap, 1.0);
    assert_eq!(r.pck.average, 1.0);
}

#[test]
fn high_threshold_leaves_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let model = dir.path().join("model.bin");
    cmd_train(&data, &tiny(Variant::Psi2d, 1), &model).unwrap();
    let opts = InferOptions { split: Split::Negative, threshold: Some(1e9), ..InferOptions::default() };
    assert!(cmd_infer(&data, &model, &opts, &dir.path().join("neg")).unwrap().is_empty());
    let text = fs::read_to_string(dir.path().join("neg").join(DETECTIONS_FILE)).unwrap();
    assert!(text.lines().all(|l| l.starts_with('#')));
}

#[test]
fn bench_reports_consistent_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path());
    let model = dir.path().join("model.bin");
    cmd_train(&data, &tiny(Variant::Psi3d2, 1), &model).unwrap();
    let r = cmd_bench(&data, &model, Split::Test, 2, PruneMode::Paper, &dir.path().join("bench")).unwrap();
    assert_eq!(r.frames.len(), 2);
    let pruned: f64 = r.frames.iter().map(|f| f.pruned_seconds).sum();
    let full: f64 = r.frames.iter().map(|f| f.unpruned_seconds).sum();
    assert!((r.speedup - full / pruned).abs() <= 1e-12 * r.speedup);
    assert!(r.frames.iter().all(|f| f.pruned_edges < f.unpruned_edges));
    let pe: usize = r.frames.iter().map(|f| f.pruned_edges).sum();
    let ue: usize = r.frames.iter().map(|f| f.unpruned_edges).sum();
    assert_eq!(r.edge_reduction, ue as f64 / pe as f64);
    assert!(dir.path().join("bench").join("bench.json").exists());
}

fn ps3d(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_ps3d")).args(args).env("RUST_LOG", "off").stderr(Stdio::null()).status().unwrap().code().unwrap()
}

#[test]
fn error_families_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    fs::write(dir.path().join("bad.toml"), "frames = -3\n").unwrap();
    fs::write(dir.path().join("broken.bin"), b"not a model").unwrap();

    assert_eq!(ps3d(&["gen-data", "--config", &d("bad.toml"), "--out", &d("x")]), 3);
    assert_eq!(ps3d(&["infer", "--dataset", &d("missing"), "--model", &d("broken.bin"), "--out", &d("y")]), 4);

    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, "frames = 2\nnegatives = 0\n").unwrap();
    assert_eq!(ps3d(&["gen-data", "--config", &cfg.to_string_lossy(), "--out", &d("data")]), 0);
    assert_eq!(ps3d(&["infer", "--dataset", &d("data"), "--model", &d("broken.bin"), "--out", &d("y")]), 5);
    // No negative frames to mine.
    assert_eq!(ps3d(&["train", "--dataset", &d("data"), "--out", &d("m.bin")]), 6);
    assert_eq!(ps3d(&["train", "--dataset", &d("data"), "--variant", "psi9", "--out", &d("m.bin")]), 2);
}
