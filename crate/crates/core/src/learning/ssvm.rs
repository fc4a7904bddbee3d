//! Structured max-margin training by stochastic subgradient descent with
//! hard-negative mining between epochs.
//!
//! Parameters are optimized in a rescaled space: every model weight is
//! `w = s * theta`, with `s = 1` for appearance, biases and pixel terms,
//! `s = 10` for linear metric terms and `s = 100` for squared metric terms.

use std::collections::HashSet;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::inference::{level_candidates, nms, InferConfig, PoseDetection, PruneMode, SearchLevel, StateSpace};
use crate::model::{dot_f32, psi_into, Placement, PsModel, MAX_SQUARED_WEIGHT};
use crate::par;

const METRIC_SCALE: f64 = 10.0;

/// A pose as the model sees it: per-part template windows and placements.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFeatures {
    pub level: usize,
    pub types: Vec<usize>,
    /// Per part, the template-sized window centered on the part's cell,
    /// zero outside the map; rows of `template_w * channels` values.
    pub windows: Vec<Vec<f32>>,
    pub placements: Vec<Placement>,
}

/// Template-sized window centered on `(col, row)`; cells outside the map are zero.
pub fn extract_window(fmap: &FeatureMap, col: usize, row: usize, tw: usize, th: usize) -> Vec<f32> {
    let ch = fmap.channels;
    let mut out = vec![0.0f32; tw * th * ch];
    for dy in 0..th {
        let r = row as i64 + dy as i64 - (th / 2) as i64;
        if r < 0 || r >= fmap.cells_h as i64 {
            continue;
        }
        for dx in 0..tw {
            let c = col as i64 + dx as i64 - (tw / 2) as i64;
            if c < 0 || c >= fmap.cells_w as i64 {
                continue;
            }
            let dst = (dy * tw + dx) * ch;
            out[dst..dst + ch].copy_from_slice(fmap.cell(c as usize, r as usize));
        }
    }
    out
}

/// Features of the pose with part `p` at cell `cells[p]` and type `types[p]`.
pub fn pose_features(model: &PsModel, fmap: &FeatureMap, space: &StateSpace, level: usize, cells: &[(usize, usize)], types: &[usize]) -> PoseFeatures {
    PoseFeatures {
        level,
        types: types.to_vec(),
        windows: cells.iter().map(|&(c, r)| extract_window(fmap, c, r, model.template_w, model.template_h)).collect(),
        placements: cells
            .iter()
            .map(|&(c, r)| Placement::new(c as f64, r as f64, space.node(c, r).point))
            .collect(),
    }
}

/// Features of a detection found on `level`.
pub fn detection_features(model: &PsModel, level: &SearchLevel, det: &PoseDetection) -> PoseFeatures {
    let cells: Vec<(usize, usize)> = det.parts.iter().map(|p| (p.col, p.row)).collect();
    let types: Vec<usize> = det.parts.iter().map(|p| p.ty).collect();
    pose_features(model, &level.features, &level.space, det.level, &cells, &types)
}

/// Model score of a pose, computed the same way as in inference.
pub fn pose_score(model: &PsModel, f: &PoseFeatures) -> Result<f64> {
    let row = model.template_w * model.channels;
    let mut s = 0.0;
    for (p, w) in f.windows.iter().enumerate() {
        let t = &model.templates[p][f.types[p]];
        for dy in 0..model.template_h {
            s += dot_f32(&t[dy * row..(dy + 1) * row], &w[dy * row..(dy + 1) * row]);
        }
        s += model.part_bias[p][f.types[p]];
    }
    for (c, spec) in model.parts.iter().enumerate() {
        if let Some(p) = spec.parent {
            let e = model.edge(c, f.types[c], f.types[p]);
            let mut psi = vec![0.0; model.variant.dims()];
            psi_into(model.variant, model.reading, &f.placements[c], &f.placements[p], &e.anchor, &mut psi)?;
            s += psi.iter().zip(&e.weights).map(|(a, b)| a * b).sum::<f64>() + e.bias;
        }
    }
    Ok(s)
}

/// Positions of the model's weights in the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    /// `[part][type]` offset of the template; the bias follows it.
    templates: Vec<Vec<usize>>,
    tlen: usize,
    /// `[child][pair]` offset of the deformation weights; the bias follows them.
    edges: Vec<Vec<usize>>,
    dims: usize,
    /// Per component of an edge block: weight scale and upper bound in learner space.
    edge_scale: Vec<f64>,
    edge_upper: Vec<f64>,
    len: usize,
}

impl Layout {
    fn new(model: &PsModel) -> Self {
        let tlen = model.template_len();
        let mut off = 0;
        let templates = model
            .types
            .iter()
            .map(|&t| {
                (0..t)
                    .map(|_| {
                        let o = off;
                        off += tlen + 1;
                        o
                    })
                    .collect()
            })
            .collect();
        let dims = model.variant.dims();
        let edges = model
            .edges
            .iter()
            .map(|e| {
                (0..e.len())
                    .map(|_| {
                        let o = off;
                        off += dims + 1;
                        o
                    })
                    .collect()
            })
            .collect();
        let mut edge_scale = vec![1.0; dims];
        for &k in model.variant.metric_terms() {
            edge_scale[k] = METRIC_SCALE;
        }
        let mut edge_upper = vec![f64::INFINITY; dims];
        for &k in model.variant.squared_terms() {
            if model.variant.metric_terms().contains(&k) {
                edge_scale[k] = METRIC_SCALE * METRIC_SCALE;
            }
            edge_upper[k] = MAX_SQUARED_WEIGHT / edge_scale[k];
        }
        if let Some(k) = model.variant.distance_term() {
            edge_upper[k] = 0.0;
        }
        Self { templates, tlen, edges, dims, edge_scale, edge_upper, len: off }
    }

    fn from_model(&self, model: &PsModel) -> Vec<f64> {
        let mut theta = vec![0.0; self.len];
        for (p, offs) in self.templates.iter().enumerate() {
            for (t, &o) in offs.iter().enumerate() {
                for (dst, &v) in theta[o..o + self.tlen].iter_mut().zip(&model.templates[p][t]) {
                    *dst = v as f64;
                }
                theta[o + self.tlen] = model.part_bias[p][t];
            }
        }
        for (c, offs) in self.edges.iter().enumerate() {
            for (k, &o) in offs.iter().enumerate() {
                let e = &model.edges[c][k];
                for d in 0..self.dims {
                    theta[o + d] = e.weights[d] / self.edge_scale[d];
                }
                theta[o + self.dims] = e.bias;
            }
        }
        theta
    }

    fn to_model(&self, theta: &[f64], base: &PsModel) -> PsModel {
        let mut m = base.clone();
        for (p, offs) in self.templates.iter().enumerate() {
            for (t, &o) in offs.iter().enumerate() {
                for (dst, &v) in m.templates[p][t].iter_mut().zip(&theta[o..o + self.tlen]) {
                    *dst = v as f32;
                }
                m.part_bias[p][t] = theta[o + self.tlen];
            }
        }
        for (c, offs) in self.edges.iter().enumerate() {
            for (k, &o) in offs.iter().enumerate() {
                let e = &mut m.edges[c][k];
                for d in 0..self.dims {
                    e.weights[d] = theta[o + d] * self.edge_scale[d];
                }
                e.bias = theta[o + self.dims];
            }
        }
        m.clamp_deformation();
        m
    }

    fn clamp(&self, theta: &mut [f64]) {
        for offs in &self.edges {
            for &o in offs {
                for d in 0..self.dims {
                    theta[o + d] = theta[o + d].min(self.edge_upper[d]);
                }
            }
        }
    }
}

/// A pose encoded against the layout: dense template blocks plus scalar entries.
#[derive(Debug, Clone)]
struct Encoded {
    blocks: Vec<(usize, Vec<f32>)>,
    scalars: Vec<(usize, f64)>,
}

impl Encoded {
    fn new(model: &PsModel, layout: &Layout, f: &PoseFeatures) -> Result<Self> {
        let mut blocks = Vec::with_capacity(f.windows.len());
        let mut scalars = Vec::new();
        for (p, w) in f.windows.iter().enumerate() {
            let o = layout.templates[p][f.types[p]];
            blocks.push((o, w.clone()));
            scalars.push((o + layout.tlen, 1.0));
        }
        let mut psi = vec![0.0; layout.dims];
        for (c, spec) in model.parts.iter().enumerate() {
            if let Some(p) = spec.parent {
                let k = f.types[c] * model.types[p] + f.types[p];
                psi_into(model.variant, model.reading, &f.placements[c], &f.placements[p], &model.edges[c][k].anchor, &mut psi)?;
                let o = layout.edges[c][k];
                for d in 0..layout.dims {
                    scalars.push((o + d, psi[d] * layout.edge_scale[d]));
                }
                scalars.push((o + layout.dims, 1.0));
            }
        }
        Ok(Self { blocks, scalars })
    }

    fn score(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for (o, w) in &self.blocks {
            s += theta[*o..*o + w.len()].iter().zip(w).map(|(a, &b)| a * b as f64).sum::<f64>();
        }
        s + self.scalars.iter().map(|&(i, v)| theta[i] * v).sum::<f64>()
    }

    fn add_to(&self, theta: &mut [f64], coef: f64) {
        for (o, w) in &self.blocks {
            for (t, &v) in theta[*o..*o + w.len()].iter_mut().zip(w) {
                *t += coef * v as f64;
            }
        }
        for &(i, v) in &self.scalars {
            theta[i] += coef * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsvmConfig {
    /// Weight of the hinge losses against the regularizer.
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch.
    pub learning_rate_decay: f64,
    pub negatives_per_frame: usize,
    /// Largest number of hard negatives kept between epochs.
    pub negative_cache: usize,
    pub prune: PruneMode,
    pub seed: u64,
}

impl Default for SsvmConfig {
    fn default() -> Self {
        Self {
            c: 0.01,
            epochs: 8,
            learning_rate: 0.2,
            learning_rate_decay: 0.8,
            negatives_per_frame: 10,
            negative_cache: 600,
            prune: PruneMode::Paper,
            seed: 0,
        }
    }
}

impl SsvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::ConfigInvalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::ConfigInvalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return Err(Error::ConfigInvalid(format!("learning rate decay must lie in (0, 1], got {}", self.learning_rate_decay)));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub objective: f64,
    pub train_pck: Option<f64>,
    pub mined: usize,
    pub cache: usize,
    pub accepted: bool,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
pub struct HardNegative {
    pub frame: usize,
    pub detection: PoseDetection,
    pub features: PoseFeatures,
}

#[derive(Debug, Clone, Default)]
pub struct MinedNegatives {
    /// Best first, at most the budget.
    pub negatives: Vec<HardNegative>,
    /// Per frame, the scores of every candidate pose scoring at least -1
    /// (one per root state and level, up to `MINING_CANDIDATES` per level), best first.
    pub frame_scores: Vec<Vec<f64>>,
}

/// Root states examined per level when mining.
pub const MINING_CANDIDATES: usize = 2000;

/// Highest-scoring poses (score >= -1) on person-free frames: at most
/// `per_frame` per frame after suppression, `budget` overall, best first.
pub fn mine_hard_negatives(model: &PsModel, frames: &[Vec<SearchLevel>], per_frame: usize, budget: usize, prune: PruneMode) -> Result<MinedNegatives> {
    let cfg = InferConfig { prune, threshold: Some(-1.0), nms_overlap: 0.5, max_candidates: MINING_CANDIDATES, max_detections: per_frame };
    let mut frame_scores = Vec::with_capacity(frames.len());
    let mut all = Vec::new();
    for (f, levels) in frames.iter().enumerate() {
        let (cands, _) = level_candidates(model, levels, &cfg)?;
        frame_scores.push(cands.iter().map(|d| d.score).collect());
        let mut kept = nms(cands, cfg.nms_overlap);
        kept.truncate(per_frame);
        all.extend(kept.into_iter().map(|d| (f, d)));
    }
    all.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    all.truncate(budget);
    let negatives = all
        .into_iter()
        .map(|(frame, detection)| {
            let level = frames[frame].iter().find(|l| l.index == detection.level).expect("detection level exists");
            let features = detection_features(model, level, &detection);
            HardNegative { frame, detection, features }
        })
        .collect();
    Ok(MinedNegatives { negatives, frame_scores })
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Regularized hinge objective: every positive and every candidate pose
/// of every negative frame contributes one hinge.
fn objective(theta: &[f64], positives: &[Encoded], frame_scores: &[Vec<f64>], c: f64) -> f64 {
    let reg = 0.5 * theta.iter().map(|v| v * v).sum::<f64>();
    let pos: f64 = par::map(positives, |e| hinge(1.0 - e.score(theta))).into_iter().sum();
    let neg: f64 = frame_scores.iter().flatten().map(|&s| hinge(1.0 + s)).sum();
    reg + c * (pos + neg)
}

type Key = (usize, usize, Vec<(usize, usize, usize)>);

fn key_of(n: &HardNegative) -> Key {
    (n.frame, n.detection.level, n.detection.parts.iter().map(|p| (p.col, p.row, p.ty)).collect())
}

/// Training objective of `model` on the given positives and negative frames.
pub fn training_objective(
    model: &PsModel,
    positives: &[PoseFeatures],
    negatives: &[Vec<SearchLevel>],
    per_frame: usize,
    c: f64,
    prune: PruneMode,
) -> Result<f64> {
    let layout = Layout::new(model);
    let theta = layout.from_model(model);
    let pos = positives.iter().map(|f| Encoded::new(model, &layout, f)).collect::<Result<Vec<_>>>()?;
    let mined = mine_hard_negatives(model, negatives, per_frame, 0, prune)?;
    Ok(objective(&theta, &pos, &mined.frame_scores, c))
}

/// Trains `init` on fixed positive poses and negatives mined from `negatives`.
/// Each epoch is one shuffled pass over positives and cached negatives; the
/// epoch is kept only if the objective does not increase, otherwise the
/// parameters are restored and the learning rate halved. `monitor` is called
/// on every accepted model and its value logged as train PCK.
pub fn fit(
    init: &PsModel,
    positives: &[PoseFeatures],
    negatives: &[Vec<SearchLevel>],
    cfg: &SsvmConfig,
    monitor: &mut dyn FnMut(&PsModel) -> Option<f64>,
) -> Result<(PsModel, Vec<EpochLog>)> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::NoValidSamples("training positives".into()));
    }
    if negatives.is_empty() {
        return Err(Error::NoValidSamples("negative frames".into()));
    }
    let first = positives[0].windows.first().and_then(|w| w.first()).copied().unwrap_or(0.0);
    if positives.iter().all(|f| f.windows.iter().all(|w| w.iter().all(|&v| v == first))) {
        return Err(Error::DegenerateData(format!("every positive feature equals {first}")));
    }
    if cfg.epochs == 0 {
        return Ok((init.clone(), Vec::new()));
    }
    let layout = Layout::new(init);
    let mut theta = layout.from_model(init);
    layout.clamp(&mut theta);
    let pos = positives.iter().map(|f| Encoded::new(init, &layout, f)).collect::<Result<Vec<_>>>()?;
    let mut cache: Vec<(Key, Encoded)> = Vec::new();
    let add_mined = |cache: &mut Vec<(Key, Encoded)>, mined: &MinedNegatives| -> Result<usize> {
        let seen: HashSet<Key> = cache.iter().map(|(k, _)| k.clone()).collect();
        let mut added = 0;
        for n in &mined.negatives {
            let k = key_of(n);
            if !seen.contains(&k) {
                cache.push((k, Encoded::new(init, &layout, &n.features)?));
                added += 1;
            }
        }
        Ok(added)
    };

    let mut model = layout.to_model(&theta, init);
    let budget = cfg.negatives_per_frame * negatives.len();
    let mined = mine_hard_negatives(&model, negatives, cfg.negatives_per_frame, budget, cfg.prune)?;
    let mut f_cur = objective(&theta, &pos, &mined.frame_scores, cfg.c);
    let added = add_mined(&mut cache, &mined)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        objective: f_cur,
        train_pck: monitor(&model),
        mined: added,
        cache: cache.len(),
        accepted: true,
        learning_rate: cfg.learning_rate,
    }];
    info!("epoch 0: objective {f_cur:.6}, {} negatives", cache.len());
    let mut eta = cfg.learning_rate;
    for epoch in 1..=cfg.epochs {
        let before = theta.clone();
        let mut order: Vec<(bool, usize)> = (0..pos.len()).map(|i| (true, i)).chain((0..cache.len()).map(|i| (false, i))).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let n = order.len() as f64;
        let decay = 1.0 - (eta / n).min(1.0);
        for (is_pos, i) in order {
            let (e, y) = if is_pos { (&pos[i], 1.0) } else { (&cache[i].1, -1.0) };
            let margin = y * e.score(&theta);
            theta.iter_mut().for_each(|v| *v *= decay);
            if margin < 1.0 {
                e.add_to(&mut theta, eta * cfg.c * y);
            }
            layout.clamp(&mut theta);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, detail: format!("parameters diverged at learning rate {eta}") });
        }
        let candidate = layout.to_model(&theta, init);
        let mined = mine_hard_negatives(&candidate, negatives, cfg.negatives_per_frame, budget, cfg.prune)?;
        let f_new = objective(&theta, &pos, &mined.frame_scores, cfg.c);
        if !f_new.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, detail: format!("objective is {f_new}") });
        }
        let added = add_mined(&mut cache, &mined)?;
        let accepted = f_new <= f_cur;
        let used_eta = eta;
        if accepted {
            f_cur = f_new;
            model = candidate;
        } else {
            theta = before;
            eta *= 0.5;
        }
        if cache.len() > cfg.negative_cache {
            let scores: Vec<f64> = par::map(&cache, |(_, e)| e.score(&theta));
            let mut idx: Vec<usize> = (0..cache.len()).collect();
            idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            idx.truncate(cfg.negative_cache);
            idx.sort_unstable();
            let mut old: Vec<Option<(Key, Encoded)>> = cache.into_iter().map(Some).collect();
            cache = idx.into_iter().map(|i| old[i].take().unwrap()).collect();
        }
        let train_pck = if accepted { monitor(&model) } else { None };
        debug!("epoch {epoch}: candidate objective {f_new:.6}");
        info!(
            "epoch {epoch}: objective {f_cur:.6}, {} ({added} new negatives, cache {}, rate {used_eta:.4}){}",
            if accepted { "accepted" } else { "rejected" },
            cache.len(),
            train_pck.map_or(String::new(), |p| format!(", train PCK {:.3}", p))
        );
        log.push(EpochLog { epoch, objective: f_cur, train_pck, mined: added, cache: cache.len(), accepted, learning_rate: used_eta });
        if accepted {
            eta *= cfg.learning_rate_decay;
        }
    }
    Ok((model, log))
}
