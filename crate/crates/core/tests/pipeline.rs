use std::io::BufReader;

use ps3d::dataset::{Dataset, Split};
use ps3d::features::{build_pyramid, Descriptor, PyramidConfig};
use ps3d::inference::{dp_infer, infer_levels, read_detections, write_detections, DetectionRecord, InferConfig, PruneMode};
use ps3d::learning::{frame_levels, train, TrainConfig};
use ps3d::model::{deserialize_model, serialize_model, Variant};
use ps3d::synthgen::{generate_dataset, generate_scene, DatasetConfig, SceneConfig};
use ps3d::Error;

fn small_training(variant: Variant) -> TrainConfig {
    TrainConfig {
        variant,
        descriptors: vec![Descriptor::IHog, Descriptor::Hdd],
        types: 2,
        epochs: 1,
        pyramid: PyramidConfig { max_levels: 2, ..PyramidConfig::default() },
        ..TrainConfig::default()
    }
}

fn frames(seeds: std::ops::Range<u64>, persons: [usize; 2]) -> Vec<ps3d::frame::RgbdFrame> {
    let cfg = SceneConfig { persons, ..SceneConfig::default() };
    seeds.map(|s| generate_scene(&cfg, s).unwrap()).collect()
}

#[test]
fn dataset_on_disk_matches_generated_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = DatasetConfig { frames: 4, test_fraction: 0.25, negatives: 2, seed: 40, scene: SceneConfig::default() };
    generate_dataset(&cfg, dir.path()).unwrap();
    let ds = Dataset::load(dir.path()).unwrap();
    assert_eq!(ds.split(Split::Train).len(), 3);
    assert_eq!(ds.split(Split::Test).len(), 1);
    assert_eq!(ds.split(Split::Negative).len(), 2);
    let first = ds.load_frame(ds.split(Split::Train)[0]).unwrap();
    let direct = generate_scene(&cfg.scene, 40).unwrap();
    assert_eq!(first.depth, direct.depth);
    assert_eq!(first.color, direct.color);
    assert_eq!(first.annotations, direct.annotations);
    let negative = ds.load_frame(ds.split(Split::Negative)[0]).unwrap();
    assert!(negative.annotations.is_empty());
}

#[test]
fn trained_model_survives_serialization_and_detects_people() {
    let out = train(&frames(0..8, [1, 2]), &frames(100..102, [0, 0]), &small_training(Variant::Psi3d4)).unwrap();
    let bytes = serialize_model(&out.model).unwrap();
    let back = deserialize_model(&bytes).unwrap();
    assert_eq!(serialize_model(&back).unwrap(), bytes);

    let frame = generate_scene(&SceneConfig::default(), 200).unwrap();
    let cfg = InferConfig { threshold: Some(f64::NEG_INFINITY), ..InferConfig::default() };
    let pyramid = build_pyramid(&frame, &back.descriptors, &back.pyramid).unwrap();
    let (dets, _) = dp_infer(&back, &pyramid, &frame, &cfg).unwrap();
    let (again, _) = infer_levels(&out.model, &frame_levels(&out.model, &frame).unwrap(), &cfg).unwrap();
    assert_eq!(dets, again);
    assert!(!dets.is_empty());
    assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(dets.iter().all(|d| d.parts.len() == back.num_parts()));

    let records: Vec<DetectionRecord> = dets.iter().map(|d| DetectionRecord { frame_id: "00200".into(), detection: d.clone() }).collect();
    let mut buf = Vec::new();
    write_detections(&records, &mut buf).unwrap();
    let read = read_detections(BufReader::new(&buf[..])).unwrap();
    assert_eq!(read.len(), records.len());
    for (a, b) in read.iter().zip(&records) {
        assert_eq!(a.frame_id, b.frame_id);
        assert_eq!(a.detection.score, b.detection.score);
        assert_eq!(a.detection.bbox, b.detection.bbox);
        assert!(a.detection.parts.iter().zip(&b.detection.parts).all(|(p, q)| (p.u, p.v, p.ty) == (q.u, q.v, q.ty)));
    }
}

#[test]
fn pruning_never_beats_exact_search() {
    let out = train(&frames(0..6, [1, 1]), &frames(100..101, [0, 0]), &small_training(Variant::Psi3d1)).unwrap();
    let frame = generate_scene(&SceneConfig::default(), 201).unwrap();
    let levels = frame_levels(&out.model, &frame).unwrap();
    let best = |prune| {
        let cfg = InferConfig { prune, threshold: Some(f64::NEG_INFINITY), ..InferConfig::default() };
        let (dets, stats) = infer_levels(&out.model, &levels, &cfg).unwrap();
        (dets[0].score, stats.edges)
    };
    let (paper, paper_edges) = best(PruneMode::Paper);
    let (exact, exact_edges) = best(PruneMode::Conservative);
    let (full, full_edges) = best(PruneMode::Off);
    assert!(paper <= exact + 1e-9);
    assert!(exact <= full + 1e-9);
    assert!(paper_edges <= exact_edges && exact_edges < full_edges);
}

#[test]
fn damaged_model_bytes_are_rejected() {
    let out = train(&frames(0..6, [1, 1]), &frames(100..101, [0, 0]), &small_training(Variant::Psi2d)).unwrap();
    let bytes = serialize_model(&out.model).unwrap();
    assert!(matches!(deserialize_model(&bytes[..bytes.len() / 2]), Err(Error::CorruptModel(_))));
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(matches!(deserialize_model(&bad), Err(Error::CorruptModel(_))));
}
