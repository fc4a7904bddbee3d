//! Training: positive samples, part types, anchors and max-margin learning.

mod anchors;
mod cluster;
mod samples;
mod ssvm;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{max_f1_threshold, pck, poses_for_truths, ApMode, ScoredBox, TruthBox, DEFAULT_ALPHA, DEFAULT_IOU};
use crate::features::{build_pyramid, Descriptor, DescriptorConfig, PyramidConfig, DEFAULT_CELL_SIZE};
use crate::frame::{BBox, PersonAnnotation, RgbdFrame};
use crate::inference::{build_state_space, infer_levels, GridGeometry, InferConfig, PruneMode, SearchLevel};
use crate::model::{DistanceReading, PartSpec, PsModel, Variant, DEFAULT_MAX_DIST, DEFAULT_TEMPLATE_SIZE, DEFAULT_TYPES};
use crate::par;

pub use anchors::compute_anchors;
pub use cluster::{cluster_part_types, kmeans, ClusterMode, TypeAssignment};
pub use samples::{build_samples, canonical_extent, choose_level, joint_points, level_grids, pose_extent, TrainingSample};
pub use ssvm::{
    detection_features, extract_window, fit, mine_hard_negatives, pose_features, pose_score, training_objective, EpochLog, HardNegative,
    MinedNegatives, PoseFeatures, SsvmConfig, MINING_CANDIDATES,
};

/// Length of every initial template.
const INIT_TEMPLATE_NORM: f64 = 0.5;
/// Random negative windows averaged for the initial templates.
const INIT_NEGATIVE_WINDOWS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub reading: DistanceReading,
    pub descriptors: Vec<Descriptor>,
    pub cell_size: usize,
    /// Part types per part before clustering drops empty ones.
    pub types: usize,
    /// Template side in cells.
    pub template_size: usize,
    pub cluster_mode: ClusterMode,
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub learning_rate_decay: f64,
    pub negatives_per_frame: usize,
    pub negative_cache: usize,
    /// Trailing fraction of the training frames kept for threshold calibration.
    pub holdout_fraction: f64,
    /// Quantile of the training shoulder-to-hip extents taken as the canonical scale.
    pub canonical_quantile: f64,
    pub pyramid: PyramidConfig,
    pub max_dist: f64,
    pub prune: PruneMode,
    pub seed: u64,
    /// Training frames used for the per-epoch PCK in the log; 0 disables it.
    pub log_pck_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let ssvm = SsvmConfig::default();
        Self {
            variant: Variant::Psi3d4,
            reading: DistanceReading::default(),
            descriptors: vec![Descriptor::IHog, Descriptor::Hdd],
            cell_size: DEFAULT_CELL_SIZE,
            types: DEFAULT_TYPES,
            template_size: DEFAULT_TEMPLATE_SIZE,
            cluster_mode: ClusterMode::TwoD,
            c: ssvm.c,
            epochs: ssvm.epochs,
            learning_rate: ssvm.learning_rate,
            learning_rate_decay: ssvm.learning_rate_decay,
            negatives_per_frame: ssvm.negatives_per_frame,
            negative_cache: ssvm.negative_cache,
            holdout_fraction: 0.2,
            canonical_quantile: 0.1,
            pyramid: PyramidConfig::default(),
            max_dist: DEFAULT_MAX_DIST,
            prune: PruneMode::Paper,
            seed: 0,
            log_pck_frames: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.descriptor_config().validate()?;
        self.pyramid.validate()?;
        self.ssvm().validate()?;
        if self.types == 0 {
            return Err(Error::ConfigInvalid("at least one part type is required".into()));
        }
        if self.template_size == 0 {
            return Err(Error::ConfigInvalid("template size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::ConfigInvalid(format!("holdout fraction must lie in [0, 1), got {}", self.holdout_fraction)));
        }
        if !(0.0..=1.0).contains(&self.canonical_quantile) {
            return Err(Error::ConfigInvalid(format!("canonical quantile must lie in [0, 1], got {}", self.canonical_quantile)));
        }
        if !(self.max_dist > 0.0 && self.max_dist.is_finite()) {
            return Err(Error::ConfigInvalid(format!("max distance must be positive, got {}", self.max_dist)));
        }
        Ok(())
    }

    pub fn descriptor_config(&self) -> DescriptorConfig {
        DescriptorConfig { descriptors: self.descriptors.clone(), cell_size: self.cell_size, ..DescriptorConfig::default() }
    }

    pub fn ssvm(&self) -> SsvmConfig {
        SsvmConfig {
            c: self.c,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            learning_rate_decay: self.learning_rate_decay,
            negatives_per_frame: self.negatives_per_frame,
            negative_cache: self.negative_cache,
            prune: self.prune,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: PsModel,
    pub log: Vec<EpochLog>,
}

/// Search levels of `frame` for `model`.
pub fn frame_levels(model: &PsModel, frame: &RgbdFrame) -> Result<Vec<SearchLevel>> {
    Ok(SearchLevel::from_pyramid(build_pyramid(frame, &model.descriptors, &model.pyramid)?, frame))
}

/// Mean margins between each annotated box and the box around its joints, as
/// fractions of the joint box: left, top, right, bottom.
pub fn box_margins<'a>(annotations: impl IntoIterator<Item = &'a PersonAnnotation>) -> [f64; 4] {
    let mut sum = [0.0; 4];
    let mut n = 0usize;
    for a in annotations {
        let Some(jb) = BBox::around(a.joints.iter().map(|j| (j.u, j.v))) else { continue };
        if jb.w <= 0.0 || jb.h <= 0.0 {
            continue;
        }
        let b = a.bbox;
        sum[0] += (jb.x - b.x) / jb.w;
        sum[1] += (jb.y - b.y) / jb.h;
        sum[2] += (b.x1() - jb.x1()) / jb.w;
        sum[3] += (b.y1() - jb.y1()) / jb.h;
        n += 1;
    }
    if n == 0 {
        return [0.0; 4];
    }
    sum.map(|s| s / n as f64)
}

/// PCK of the poses found on `frames`, each person matched to the pose with the best box overlap.
pub fn frames_pck(model: &PsModel, frames: &[(Vec<SearchLevel>, Vec<PersonAnnotation>)], alpha: f64) -> Result<f64> {
    let cfg = InferConfig { threshold: Some(f64::NEG_INFINITY), ..InferConfig::default() };
    let mut preds = Vec::new();
    let mut truths = Vec::new();
    for (levels, annotations) in frames {
        let people: Vec<PersonAnnotation> = annotations.iter().filter(|a| a.has_pose()).cloned().collect();
        let (dets, _) = infer_levels(model, levels, &cfg)?;
        preds.extend(poses_for_truths(&dets, &people));
        truths.extend(people);
    }
    Ok(pck(&preds, &truths, alpha)?.average)
}

/// Threshold with the best F1 on `frames`; `None` when they hold no ground truth.
pub fn calibrate_threshold(model: &PsModel, frames: &[RgbdFrame], prune: PruneMode) -> Result<Option<f64>> {
    let cfg = InferConfig { prune, threshold: Some(f64::NEG_INFINITY), ..InferConfig::default() };
    let per = par::map_indexed(frames.len(), |i| -> Result<Vec<ScoredBox>> {
        let (dets, _) = infer_levels(model, &frame_levels(model, &frames[i])?, &cfg)?;
        Ok(dets.into_iter().map(|d| ScoredBox { frame: i, score: d.score, bbox: d.bbox }).collect())
    });
    let mut dets = Vec::new();
    for d in per {
        dets.extend(d?);
    }
    let truths: Vec<TruthBox> = frames
        .iter()
        .enumerate()
        .flat_map(|(i, f)| f.annotations.iter().map(move |a| TruthBox { frame: i, bbox: a.bbox, difficult: a.difficult }))
        .collect();
    Ok(max_f1_threshold(&dets, &truths, DEFAULT_IOU, ApMode::Normal).map(|(t, _)| t))
}

/// Whether every part of a positive has depth and every edge is shorter than `max_dist`.
fn feasible_3d(model: &PsModel, f: &PoseFeatures) -> bool {
    model.parts.iter().all(|spec| match (spec.parent, f.placements[spec.id].point) {
        (_, None) => false,
        (None, Some(_)) => true,
        (Some(q), Some(a)) => f.placements[q].point.is_some_and(|b| a.distance(b) < model.max_dist),
    })
}

/// Positive poses of every sample, snapped to their level's grid.
fn extract_positives(model: &PsModel, frames: &[RgbdFrame], samples: &[TrainingSample], types: &[Vec<usize>]) -> Result<Vec<Option<PoseFeatures>>> {
    let mut by_frame: Vec<Vec<usize>> = vec![Vec::new(); frames.len()];
    for (i, s) in samples.iter().enumerate() {
        by_frame[s.frame].push(i);
    }
    let per = par::map_indexed(frames.len(), |f| -> Result<Vec<(usize, PoseFeatures)>> {
        if by_frame[f].is_empty() {
            return Ok(Vec::new());
        }
        let pyramid = build_pyramid(&frames[f], &model.descriptors, &model.pyramid)?;
        let mut out = Vec::new();
        for &i in &by_frame[f] {
            let s = &samples[i];
            let level = &pyramid.levels[s.level];
            let grid = GridGeometry::of_level(level);
            let space = build_state_space(grid, &frames[f].depth, &frames[f].intrinsics);
            let cells = s.snapped(&grid);
            out.push((i, pose_features(model, &level.features, &space, s.level, &cells, &types[i])));
        }
        Ok(out)
    });
    let mut positives = vec![None; samples.len()];
    for r in per {
        for (i, p) in r? {
            positives[i] = Some(p);
        }
    }
    Ok(positives)
}

/// Initial weights: each template is the normalized difference between the
/// mean positive window of its type and the mean of random negative windows;
/// deformations start as a fixed concave bowl.
fn initialize(model: &mut PsModel, positives: &[PoseFeatures], negatives: &[Vec<SearchLevel>], seed: u64) {
    let tlen = model.template_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut neg_mean = vec![0.0f64; tlen];
    let mut drawn = 0usize;
    let levels: Vec<&SearchLevel> = negatives.iter().flatten().collect();
    if !levels.is_empty() {
        for _ in 0..INIT_NEGATIVE_WINDOWS {
            let l = levels[rng.random_range(0..levels.len())];
            let (c, r) = (rng.random_range(0..l.features.cells_w), rng.random_range(0..l.features.cells_h));
            let w = extract_window(&l.features, c, r, model.template_w, model.template_h);
            for (m, v) in neg_mean.iter_mut().zip(w) {
                *m += v as f64;
            }
            drawn += 1;
        }
        neg_mean.iter_mut().for_each(|m| *m /= drawn as f64);
    }
    for p in 0..model.num_parts() {
        for t in 0..model.types[p] {
            let mut mean = vec![0.0f64; tlen];
            let mut n = 0usize;
            for f in positives.iter().filter(|f| f.types[p] == t) {
                for (m, &v) in mean.iter_mut().zip(&f.windows[p]) {
                    *m += v as f64;
                }
                n += 1;
            }
            if n == 0 {
                continue;
            }
            let diff: Vec<f64> = mean.iter().zip(&neg_mean).map(|(m, q)| m / n as f64 - q).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                model.templates[p][t] = diff.iter().map(|v| (v / norm * INIT_TEMPLATE_NORM) as f32).collect();
            }
        }
    }
    let v = model.variant;
    for e in model.edges.iter_mut().flatten() {
        e.weights.iter_mut().for_each(|w| *w = 0.0);
        for &k in v.squared_terms() {
            e.weights[k] = if v.metric_terms().contains(&k) { -10.0 } else { -0.1 };
        }
        if let Some(k) = v.distance_term() {
            e.weights[k] = -3.0;
        }
        e.bias = 0.0;
    }
    model.part_bias.iter_mut().flatten().for_each(|b| *b = 0.0);
}

/// Trains a model on annotated frames and person-free negative frames.
///
/// The last `holdout_fraction` of `train_frames` is kept out of training and
/// used to calibrate the detection threshold.
pub fn train(train_frames: &[RgbdFrame], negative_frames: &[RgbdFrame], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_frames.is_empty() {
        return Err(Error::NoValidSamples("training frames".into()));
    }
    if negative_frames.is_empty() {
        return Err(Error::NoValidSamples("negative frames".into()));
    }
    let n = train_frames.len();
    let hold = ((cfg.holdout_fraction * n as f64).round() as usize).min(n - 1);
    let (fit_frames, held) = train_frames.split_at(n - hold);

    let desc = cfg.descriptor_config();
    let grids: Vec<Vec<GridGeometry>> = fit_frames.iter().map(|f| level_grids(&cfg.pyramid, cfg.cell_size, f.width(), f.height())).collect();
    let extents: Vec<f64> = fit_frames.iter().flat_map(|f| f.annotations.iter().filter(|a| a.has_pose()).map(pose_extent)).collect();
    let canonical = canonical_extent(&extents, cfg.canonical_quantile).map_err(|_| Error::NoValidSamples("annotated poses".into()))?;
    let samples = build_samples(fit_frames, &grids, canonical);
    if samples.is_empty() {
        return Err(Error::NoValidSamples("annotated poses".into()));
    }
    info!("{} positive samples from {} frames, canonical extent {canonical:.1} px", samples.len(), fit_frames.len());

    let parts = PartSpec::upper_body();
    let assignment = cluster_part_types(&samples, &parts, cfg.types, cfg.cluster_mode, cfg.seed)?;
    let mut model = PsModel::zeros(cfg.variant, parts.clone(), assignment.counts.clone(), desc, cfg.template_size)?;
    model.reading = cfg.reading;
    model.max_dist = cfg.max_dist;
    model.pyramid = cfg.pyramid.clone();
    model.box_margin = box_margins(samples.iter().map(|s| &fit_frames[s.frame].annotations[s.person]));
    let anchors = compute_anchors(&samples, &assignment, &parts);
    for (edges, anchors) in model.edges.iter_mut().zip(&anchors) {
        for (e, a) in edges.iter_mut().zip(anchors) {
            e.anchor = *a;
        }
    }

    let extracted = extract_positives(&model, fit_frames, &samples, &assignment.types)?;
    let total = extracted.len();
    let positives: Vec<PoseFeatures> = extracted.into_iter().flatten().filter(|f| !model.variant.is_3d() || feasible_3d(&model, f)).collect();
    if positives.len() < total {
        warn!("{} of {total} positives dropped: a part lacks depth or an edge exceeds {} m", total - positives.len(), model.max_dist);
    }
    if positives.is_empty() {
        return Err(Error::NoValidSamples("positives with usable depth".into()));
    }

    let negatives = par::map(negative_frames, |f| frame_levels(&model, f)).into_iter().collect::<Result<Vec<_>>>()?;
    initialize(&mut model, &positives, &negatives, cfg.seed);
    if cfg.epochs == 0 {
        return Ok(TrainOutput { model, log: Vec::new() });
    }

    let monitor_frames: Vec<(Vec<SearchLevel>, Vec<PersonAnnotation>)> = fit_frames
        .iter()
        .take(cfg.log_pck_frames)
        .map(|f| Ok((frame_levels(&model, f)?, f.annotations.clone())))
        .collect::<Result<_>>()?;
    let mut monitor = |m: &PsModel| {
        if monitor_frames.is_empty() {
            return None;
        }
        frames_pck(m, &monitor_frames, DEFAULT_ALPHA).ok()
    };
    let (mut model, log) = fit(&model, &positives, &negatives, &cfg.ssvm(), &mut monitor)?;

    model.threshold = match calibrate_threshold(&model, held, cfg.prune)? {
        Some(t) => t,
        None => {
            warn!("no held-out ground truth; detection threshold left at 0");
            0.0
        }
    };
    info!("detection threshold {:.4}", model.threshold);
    Ok(TrainOutput { model, log })
}
