//! Commands behind the `ps3d` binary.

mod overlay;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use ps3d::dataset::{Dataset, Split};
use ps3d::eval::{
    ap_table, average_precision, pck, pck_table, poses_for_truths, pr_curve_svg, ApMode, ApResult, PckResult, ScoredBox, TruthBox,
    DEFAULT_ALPHA, DEFAULT_IOU,
};
use ps3d::features::build_pyramid;
use ps3d::frame::{write_color_png, RgbdFrame};
use ps3d::inference::{dp_infer, infer_frame, read_detections, write_detections, DetectionRecord, InferConfig, PruneMode};
use ps3d::learning::{train, TrainConfig, TrainOutput};
use ps3d::model::{load_model, save_model};
use ps3d::synthgen::{generate_dataset, DatasetConfig};
use ps3d::{par, Error, Result};

pub use overlay::draw_pose;

pub const DETECTIONS_FILE: &str = "detections.txt";

/// Process exit code of an error; each error family has its own code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ConfigInvalid(_) => 3,
        Error::Io(_) | Error::Format { .. } => 4,
        Error::VersionMismatch { .. } | Error::CorruptModel(_) => 5,
        Error::InsufficientSamples(_) | Error::NoValidSamples(_) | Error::DegenerateData(_) | Error::NoGroundTruth => 6,
        Error::NonFiniteLoss { .. } => 7,
        Error::InvalidDepth { .. }
        | Error::DimensionMismatch(_)
        | Error::ImageTooSmall { .. }
        | Error::GridMismatch(_)
        | Error::OutOfBounds { .. }
        | Error::NonConcaveDeformation(..)
        | Error::EmptyStateSpace
        | Error::InstanceTooLarge { .. } => 8,
    }
}

/// Fails with a not-found I/O error naming `path` when it does not exist.
pub fn require_path(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(io::Error::new(io::ErrorKind::NotFound, format!("{what} {} does not exist", path.display()))))
    }
}

fn open_dataset(root: &Path) -> Result<Dataset> {
    require_path(root, "dataset")?;
    Dataset::load(root)
}

fn open_model(path: &Path) -> Result<ps3d::model::PsModel> {
    require_path(path, "model")?;
    load_model(path)
}

fn load_split(dataset: &Dataset, split: Split) -> Result<Vec<(usize, RgbdFrame)>> {
    let entries = dataset.split(split);
    par::map(&entries, |e| dataset.load_frame(e).map(|f| (e.id, f))).into_iter().collect()
}

pub fn cmd_gen_data(cfg: &DatasetConfig, out: &Path) -> Result<Dataset> {
    let ds = generate_dataset(cfg, out)?;
    info!(
        "wrote {} train, {} test and {} negative frames to {}",
        ds.split(Split::Train).len(),
        ds.split(Split::Test).len(),
        ds.split(Split::Negative).len(),
        out.display()
    );
    Ok(ds)
}

/// One line per epoch: objective, train PCK, newly mined negatives.
pub fn format_train_log(out: &TrainOutput) -> String {
    let mut s = String::from("# epoch objective train_pck mined cache accepted learning_rate\n");
    for l in &out.log {
        let pck = l.train_pck.map_or("-".to_string(), |p| format!("{p:.4}"));
        s.push_str(&format!("{} {:.6} {} {} {} {} {}\n", l.epoch, l.objective, pck, l.mined, l.cache, l.accepted, l.learning_rate));
    }
    s
}

/// Trains on the dataset's train split with its negatives; writes the model
/// to `out` and the training log next to it (`<out>.log`).
pub fn cmd_train(dataset: &Path, cfg: &TrainConfig, out: &Path) -> Result<TrainOutput> {
    let ds = open_dataset(dataset)?;
    let frames: Vec<RgbdFrame> = load_split(&ds, Split::Train)?.into_iter().map(|(_, f)| f).collect();
    let negatives: Vec<RgbdFrame> = load_split(&ds, Split::Negative)?.into_iter().map(|(_, f)| f).collect();
    let output = train(&frames, &negatives, cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_model(&output.model, out)?;
    fs::write(log_path(out), format_train_log(&output))?;
    info!("model written to {}", out.display());
    Ok(output)
}

pub fn log_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".log");
    PathBuf::from(s)
}

#[derive(Debug, Clone)]
pub struct InferOptions {
    pub split: Split,
    pub prune: PruneMode,
    /// Overrides the model's threshold.
    pub threshold: Option<f64>,
    pub overlays: bool,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self { split: Split::Test, prune: PruneMode::Paper, threshold: None, overlays: false }
    }
}

/// Runs the model on one split; writes `detections.txt` (frames in id order)
/// and, if asked, one overlay PNG per frame under `overlays/`.
pub fn cmd_infer(dataset: &Path, model: &Path, opts: &InferOptions, out_dir: &Path) -> Result<Vec<DetectionRecord>> {
    let ds = open_dataset(dataset)?;
    let model = open_model(model)?;
    let cfg = InferConfig { prune: opts.prune, threshold: opts.threshold, ..InferConfig::default() };
    let entries = ds.split(opts.split);
    fs::create_dir_all(out_dir)?;
    if opts.overlays {
        fs::create_dir_all(out_dir.join("overlays"))?;
    }
    let per = par::map(&entries, |e| -> Result<Vec<DetectionRecord>> {
        let frame = ds.load_frame(e)?;
        let dets = infer_frame(&model, &frame, &cfg)?;
        if opts.overlays {
            let mut img = frame.color.clone();
            for d in &dets {
                draw_pose(&mut img, d);
            }
            write_color_png(&img, &out_dir.join("overlays").join(format!("{}.png", frame_id(e.id))))?;
        }
        Ok(dets.into_iter().map(|detection| DetectionRecord { frame_id: frame_id(e.id), detection }).collect())
    });
    let mut records = Vec::new();
    for r in per {
        records.extend(r?);
    }
    let mut w = BufWriter::new(File::create(out_dir.join(DETECTIONS_FILE))?);
    write_detections(&records, &mut w)?;
    w.flush()?;
    info!("{} detections on {} frames", records.len(), entries.len());
    Ok(records)
}

pub fn frame_id(id: usize) -> String {
    format!("{id:05}")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub name: String,
    pub pck: PckResult,
    pub ap_normal: ApResult,
    pub ap_all: ApResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub runs: Vec<RunResult>,
}

/// Scores detection files against a split's ground truth. Writes `pck.txt`,
/// `ap.txt`, `pr_curve.svg` and `results.json` to `out_dir`.
pub fn cmd_eval(dataset: &Path, split: Split, runs: &[(String, PathBuf)], out_dir: &Path) -> Result<EvalReport> {
    if runs.is_empty() {
        return Err(Error::ConfigInvalid("no detection files to evaluate".into()));
    }
    let ds = open_dataset(dataset)?;
    let frames = load_split(&ds, split)?;
    let index: HashMap<String, usize> = frames.iter().enumerate().map(|(k, (id, _))| (frame_id(*id), k)).collect();
    let truths: Vec<TruthBox> = frames
        .iter()
        .enumerate()
        .flat_map(|(k, (_, f))| f.annotations.iter().map(move |a| TruthBox { frame: k, bbox: a.bbox, difficult: a.difficult }))
        .collect();
    let mut results = Vec::new();
    for (name, path) in runs {
        require_path(path, "detections file")?;
        let records = read_detections(BufReader::new(File::open(path)?))?;
        let mut per_frame = vec![Vec::new(); frames.len()];
        let mut scored = Vec::new();
        for r in records {
            let Some(&k) = index.get(&r.frame_id) else {
                return Err(Error::ConfigInvalid(format!("{}: frame {} is not in the {split:?} split", path.display(), r.frame_id)));
            };
            scored.push(ScoredBox { frame: k, score: r.detection.score, bbox: r.detection.bbox });
            per_frame[k].push(r.detection);
        }
        let mut preds = Vec::new();
        let mut people = Vec::new();
        for ((_, f), dets) in frames.iter().zip(&per_frame) {
            let annotated: Vec<_> = f.annotations.iter().filter(|a| a.has_pose()).cloned().collect();
            preds.extend(poses_for_truths(dets, &annotated));
            people.extend(annotated);
        }
        results.push(RunResult {
            name: name.clone(),
            pck: pck(&preds, &people, DEFAULT_ALPHA)?,
            ap_normal: average_precision(&scored, &truths, DEFAULT_IOU, ApMode::Normal)?,
            ap_all: average_precision(&scored, &truths, DEFAULT_IOU, ApMode::All)?,
        });
    }
    fs::create_dir_all(out_dir)?;
    let pck_cols: Vec<(String, PckResult)> = results.iter().map(|r| (r.name.clone(), r.pck.clone())).collect();
    fs::write(out_dir.join("pck.txt"), pck_table(&pck_cols))?;
    let ap_rows: Vec<(String, ApResult, ApResult)> = results.iter().map(|r| (r.name.clone(), r.ap_normal.clone(), r.ap_all.clone())).collect();
    fs::write(out_dir.join("ap.txt"), ap_table(&ap_rows))?;
    let curves: Vec<(String, Vec<(f64, f64)>)> = results
        .iter()
        .flat_map(|r| {
            [
                (format!("{} ({})", r.name, ApMode::Normal.label()), r.ap_normal.curve.clone()),
                (format!("{} ({})", r.name, ApMode::All.label()), r.ap_all.curve.clone()),
            ]
        })
        .collect();
    fs::write(out_dir.join("pr_curve.svg"), pr_curve_svg(&curves))?;
    let report = EvalReport { runs: results };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?;
    fs::write(out_dir.join("results.json"), json + "\n")?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchFrame {
    pub frame_id: String,
    pub pruned_seconds: f64,
    pub unpruned_seconds: f64,
    pub pruned_edges: usize,
    pub unpruned_edges: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub variant: String,
    pub prune: PruneMode,
    pub frames: Vec<BenchFrame>,
    pub pruned_seconds: f64,
    pub unpruned_seconds: f64,
    /// Total unpruned time over total pruned time.
    pub speedup: f64,
    /// Total unpruned edges over total pruned edges.
    pub edge_reduction: f64,
}

impl BenchReport {
    pub fn summary(&self) -> String {
        let mut s = format!("{:<8} {:>10} {:>10} {:>12} {:>12}\n", "frame", "pruned_s", "full_s", "pruned_edges", "full_edges");
        for f in &self.frames {
            s.push_str(&format!(
                "{:<8} {:>10.4} {:>10.4} {:>12} {:>12}\n",
                f.frame_id, f.pruned_seconds, f.unpruned_seconds, f.pruned_edges, f.unpruned_edges
            ));
        }
        s.push_str(&format!(
            "total    {:>10.4} {:>10.4}   speedup {:.2}x, edges reduced {:.2}x\n",
            self.pruned_seconds, self.unpruned_seconds, self.speedup, self.edge_reduction
        ));
        s
    }
}

/// Times search with the neighborhood map against the unpruned search on up
/// to `max_frames` frames of a split. Both runs share each frame's pyramid.
pub fn bench_frames(model: &ps3d::model::PsModel, frames: &[(String, RgbdFrame)], prune: PruneMode) -> Result<BenchReport> {
    let cfg = InferConfig { prune, ..InferConfig::default() };
    let off = InferConfig { prune: PruneMode::Off, ..InferConfig::default() };
    let mut rows = Vec::new();
    for (id, frame) in frames {
        let pyramid = build_pyramid(frame, &model.descriptors, &model.pyramid)?;
        let (_, sp) = dp_infer(model, &pyramid, frame, &cfg)?;
        let (_, so) = dp_infer(model, &pyramid, frame, &off)?;
        rows.push(BenchFrame {
            frame_id: id.clone(),
            pruned_seconds: sp.search_seconds,
            unpruned_seconds: so.search_seconds,
            pruned_edges: sp.edges,
            unpruned_edges: so.edges,
        });
    }
    let pruned_seconds: f64 = rows.iter().map(|r| r.pruned_seconds).sum();
    let unpruned_seconds: f64 = rows.iter().map(|r| r.unpruned_seconds).sum();
    let pe: usize = rows.iter().map(|r| r.pruned_edges).sum();
    let ue: usize = rows.iter().map(|r| r.unpruned_edges).sum();
    Ok(BenchReport {
        variant: model.variant.name().to_string(),
        prune,
        frames: rows,
        pruned_seconds,
        unpruned_seconds,
        speedup: if pruned_seconds > 0.0 { unpruned_seconds / pruned_seconds } else { f64::NAN },
        edge_reduction: if pe > 0 { ue as f64 / pe as f64 } else { f64::NAN },
    })
}

/// Benchmarks a model on a split and writes `bench.json` and `bench.txt` to `out_dir`.
pub fn cmd_bench(dataset: &Path, model: &Path, split: Split, max_frames: usize, prune: PruneMode, out_dir: &Path) -> Result<BenchReport> {
    let ds = open_dataset(dataset)?;
    let model = open_model(model)?;
    let entries: Vec<_> = ds.split(split).into_iter().take(max_frames).collect();
    let frames = entries.iter().map(|e| Ok((frame_id(e.id), ds.load_frame(e)?))).collect::<Result<Vec<_>>>()?;
    let report = bench_frames(&model, &frames, prune)?;
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?;
    fs::write(out_dir.join("bench.json"), json + "\n")?;
    fs::write(out_dir.join("bench.txt"), report.summary())?;
    Ok(report)
}
