//! State spaces, neighborhood maps and exact tree inference.

mod brute;
mod dp;
mod gdt;
mod neighbors;
mod nms;
mod state;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{build_pyramid, FeatureMap, FeaturePyramid, PyramidLevel};
use crate::frame::{BBox, RgbdFrame};
use crate::geometry::CameraIntrinsics;
use crate::image::DepthImage;
use crate::model::{template_dot, PsModel};
use crate::par;

pub use brute::{brute_force_infer, enumerate_infer, DEFAULT_BUDGET};
pub use dp::{configuration_score, dp_level, dp_level_scheduled, Assignment, LevelInput, LevelSolution, PairSet};
pub use gdt::{gdt_1d, gdt_message, Quadratic};
pub use neighbors::{brute_force_neighbors, build_neighborhood_map, NeighborhoodMap, PruneMode};
pub use nms::{nms, read_detections, write_detections, DetectionRecord};
pub use state::{build_state_space, GridGeometry, StateNode, StateSpace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub prune: PruneMode,
    /// Overrides the model's calibrated threshold.
    pub threshold: Option<f64>,
    pub nms_overlap: f64,
    /// Root states considered per level, best first.
    pub max_candidates: usize,
    /// Detections kept per frame after suppression.
    pub max_detections: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self { prune: PruneMode::Paper, threshold: None, nms_overlap: 0.5, max_candidates: 2000, max_detections: 20 }
    }
}

/// One part of a detected pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartState {
    pub col: usize,
    pub row: usize,
    pub ty: usize,
    /// Native pixel.
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseDetection {
    pub level: usize,
    pub score: f64,
    pub parts: Vec<PartState>,
    pub bbox: BBox,
}

/// Appearance scores of every part type at every cell, part bias included.
/// Templates are centered on the cell; the map is zero-padded so every cell is scored.
pub fn unary_tables(model: &PsModel, fmap: &FeatureMap) -> Result<Vec<Vec<Vec<f64>>>> {
    if fmap.channels != model.channels {
        return Err(Error::GridMismatch(format!("map has {} channels, model {}", fmap.channels, model.channels)));
    }
    let pad = model.template_w.max(model.template_h) / 2;
    let padded = fmap.padded(pad);
    let (ox, oy) = (pad - model.template_w / 2, pad - model.template_h / 2);
    let jobs: Vec<(usize, usize)> = (0..model.num_parts()).flat_map(|p| (0..model.types[p]).map(move |t| (p, t))).collect();
    let tables = par::map(&jobs, |&(p, t)| {
        let bias = model.part_bias[p][t];
        let mut out = Vec::with_capacity(fmap.num_cells());
        for row in 0..fmap.cells_h {
            for col in 0..fmap.cells_w {
                out.push(template_dot(model, &padded, p, t, col + ox, row + oy) + bias);
            }
        }
        out
    });
    let mut it = tables.into_iter();
    Ok(model.types.iter().map(|&t| (0..t).map(|_| it.next().unwrap()).collect()).collect())
}

/// State space, neighborhood map and unary tables of one level.
pub struct PreparedLevel {
    pub space: StateSpace,
    pub map: Option<NeighborhoodMap>,
    pub unary: Vec<Vec<Vec<f64>>>,
}

impl PreparedLevel {
    pub fn input(&self) -> LevelInput<'_> {
        LevelInput {
            space: &self.space,
            unary: self.unary.clone(),
            pairs: self.map.as_ref().map_or(PairSet::All, PairSet::Map),
        }
    }
}

pub fn prepare_level(
    model: &PsModel,
    level: &PyramidLevel,
    depth: &DepthImage,
    intr: &CameraIntrinsics,
    prune: PruneMode,
) -> Result<PreparedLevel> {
    let space = build_state_space(GridGeometry::of_level(level), depth, intr);
    let map = (model.variant.is_3d() && prune != PruneMode::Off).then(|| build_neighborhood_map(&space, intr, model.max_dist, prune));
    let unary = unary_tables(model, &level.features)?;
    Ok(PreparedLevel { space, map, unary })
}

/// Timing and size counters of one inference run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferStats {
    pub nodes: usize,
    /// Directed pairs available to 3D messages.
    pub edges: usize,
    /// Seconds spent building neighborhood maps and running the DP.
    pub search_seconds: f64,
}

fn pose_from(model: &PsModel, space: &StateSpace, level: usize, score: f64, a: &Assignment) -> PoseDetection {
    let parts: Vec<PartState> = a
        .iter()
        .map(|&(node, ty)| {
            let n = &space.nodes[node];
            PartState { col: n.col, row: n.row, ty, u: n.u, v: n.v }
        })
        .collect();
    let bbox = pose_box(model, &parts, space.grid.cell_size as f64 / space.grid.scale_x);
    PoseDetection { level, score, parts, bbox }
}

/// Box around the part pixels, grown by the model's margins.
pub fn pose_box(model: &PsModel, parts: &[PartState], min_extent: f64) -> BBox {
    let b = BBox::around(parts.iter().map(|p| (p.u, p.v))).unwrap_or_default();
    let (w, h) = (b.w.max(min_extent), b.h.max(min_extent));
    let (cx, cy) = (b.x + b.w / 2.0, b.y + b.h / 2.0);
    let m = model.box_margin;
    BBox::from_corners(cx - w / 2.0 - m[0] * w, cy - h / 2.0 - m[1] * h, cx + w / 2.0 + m[2] * w, cy + h / 2.0 + m[3] * h)
}

/// Candidate poses of one prepared level: root states at or above `threshold`, best first.
pub fn level_detections(
    model: &PsModel,
    prepared: &PreparedLevel,
    level: usize,
    threshold: f64,
    max_candidates: usize,
) -> Result<Vec<PoseDetection>> {
    let input = prepared.input();
    let sol = dp_level(model, &input)?;
    let mut cands: Vec<(f64, usize, usize)> = (0..prepared.space.len())
        .map(|node| {
            let (s, t) = sol.best_at(node);
            (s, node, t)
        })
        .filter(|&(s, _, _)| s.is_finite() && s >= threshold)
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    cands.truncate(max_candidates);
    Ok(cands.into_iter().map(|(s, node, t)| pose_from(model, &prepared.space, level, s, &sol.backtrace(model, node, t))).collect())
}

/// A pyramid level ready for search: its features and the state space over its grid.
#[derive(Debug, Clone)]
pub struct SearchLevel {
    pub index: usize,
    pub features: FeatureMap,
    pub space: StateSpace,
    /// Native camera; state-space points live in native camera coordinates.
    pub intrinsics: CameraIntrinsics,
}

impl SearchLevel {
    pub fn from_pyramid(pyramid: FeaturePyramid, frame: &RgbdFrame) -> Vec<SearchLevel> {
        pyramid
            .levels
            .into_iter()
            .map(|level| SearchLevel {
                index: level.index,
                space: build_state_space(GridGeometry::of_level(&level), &frame.depth, &frame.intrinsics),
                features: level.features,
                intrinsics: frame.intrinsics,
            })
            .collect()
    }
}

fn search_level(
    model: &PsModel,
    index: usize,
    features: &FeatureMap,
    space: StateSpace,
    intr: &CameraIntrinsics,
    cfg: &InferConfig,
    threshold: f64,
    stats: &mut InferStats,
) -> Result<Vec<PoseDetection>> {
    let start = Instant::now();
    let map = (model.variant.is_3d() && cfg.prune != PruneMode::Off).then(|| build_neighborhood_map(&space, intr, model.max_dist, cfg.prune));
    let map_time = start.elapsed().as_secs_f64();
    let unary = unary_tables(model, features)?;
    stats.nodes += space.len();
    stats.edges += match (&map, model.variant.is_3d()) {
        (Some(m), _) => m.num_edges(),
        (None, true) => {
            let v = space.valid_count();
            v * v.saturating_sub(1)
        }
        (None, false) => 0,
    };
    let prepared = PreparedLevel { space, map, unary };
    let start = Instant::now();
    let dets = level_detections(model, &prepared, index, threshold, cfg.max_candidates)?;
    stats.search_seconds += map_time + start.elapsed().as_secs_f64();
    Ok(dets)
}

fn finish(all: Vec<PoseDetection>, cfg: &InferConfig) -> Vec<PoseDetection> {
    let mut kept = nms(all, cfg.nms_overlap);
    kept.truncate(cfg.max_detections);
    kept
}

/// Candidate poses of every level before suppression, best first across levels.
pub fn level_candidates(model: &PsModel, levels: &[SearchLevel], cfg: &InferConfig) -> Result<(Vec<PoseDetection>, InferStats)> {
    let threshold = cfg.threshold.unwrap_or(model.threshold);
    let mut stats = InferStats::default();
    let mut all = Vec::new();
    for level in levels {
        all.extend(search_level(model, level.index, &level.features, level.space.clone(), &level.intrinsics, cfg, threshold, &mut stats)?);
    }
    all.sort_by(nms::rank);
    Ok((all, stats))
}

/// Inference over prepared levels: per-level DP, thresholding and suppression.
pub fn infer_levels(model: &PsModel, levels: &[SearchLevel], cfg: &InferConfig) -> Result<(Vec<PoseDetection>, InferStats)> {
    let (all, stats) = level_candidates(model, levels, cfg)?;
    Ok((finish(all, cfg), stats))
}

/// Full-frame inference on a prebuilt pyramid: per-level DP, thresholding and suppression.
/// Search time includes building each level's state space.
pub fn dp_infer(model: &PsModel, pyramid: &FeaturePyramid, frame: &RgbdFrame, cfg: &InferConfig) -> Result<(Vec<PoseDetection>, InferStats)> {
    let threshold = cfg.threshold.unwrap_or(model.threshold);
    let mut stats = InferStats::default();
    let mut all = Vec::new();
    for level in &pyramid.levels {
        let start = Instant::now();
        let space = build_state_space(GridGeometry::of_level(level), &frame.depth, &frame.intrinsics);
        stats.search_seconds += start.elapsed().as_secs_f64();
        all.extend(search_level(model, level.index, &level.features, space, &frame.intrinsics, cfg, threshold, &mut stats)?);
    }
    Ok((finish(all, cfg), stats))
}

/// Builds the model's pyramid for `frame` and runs [`dp_infer`].
pub fn infer_frame(model: &PsModel, frame: &RgbdFrame, cfg: &InferConfig) -> Result<Vec<PoseDetection>> {
    let pyramid = build_pyramid(frame, &model.descriptors, &model.pyramid)?;
    Ok(dp_infer(model, &pyramid, frame, cfg)?.0)
}
