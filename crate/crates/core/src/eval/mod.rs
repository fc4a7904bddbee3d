//! Pose (PCK) and detection (AP) evaluation.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BBox, PersonAnnotation, NUM_JOINTS};
use crate::inference::PoseDetection;

pub use report::{ap_table, pck_table, pr_curve_svg};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_IOU: f64 = 0.5;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x1().min(b.x1()) - a.x.max(b.x)).max(0.0);
    let ih = (a.y1().min(b.y1()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// For every ground-truth box, the index of the predicted box with the
/// largest positive IoU (lowest index on ties).
pub fn associate(predicted: &[BBox], truth: &[BBox]) -> Vec<Option<usize>> {
    truth
        .iter()
        .map(|g| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in predicted.iter().enumerate() {
                let o = iou(p, g);
                if o > 0.0 && best.is_none_or(|(_, b)| o > b) {
                    best = Some((i, o));
                }
            }
            best.map(|(i, _)| i)
        })
        .collect()
}

/// Joint estimates for every ground-truth person: the pose whose box best
/// overlaps the person's box, or `None` when no box overlaps it.
pub fn poses_for_truths(detections: &[PoseDetection], truths: &[PersonAnnotation]) -> Vec<Option<[(f64, f64); NUM_JOINTS]>> {
    let boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
    let gt: Vec<BBox> = truths.iter().map(|t| t.bbox).collect();
    associate(&boxes, &gt)
        .into_iter()
        .map(|m| {
            m.and_then(|i| {
                let parts = &detections[i].parts;
                (parts.len() == NUM_JOINTS).then(|| std::array::from_fn(|j| (parts[j].u, parts[j].v)))
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckResult {
    pub per_part: Vec<f64>,
    pub average: f64,
    pub alpha: f64,
    pub samples: usize,
}

/// Fraction of joints within `alpha * max(w, h)` of the truth, per joint
/// index. `predictions[k]` belongs to `truths[k]`; `None` counts every joint as missed.
pub fn pck(predictions: &[Option<[(f64, f64); NUM_JOINTS]>], truths: &[PersonAnnotation], alpha: f64) -> Result<PckResult> {
    if truths.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    assert_eq!(predictions.len(), truths.len(), "one prediction slot per person");
    let mut hits = [0usize; NUM_JOINTS];
    for (pred, gt) in predictions.iter().zip(truths) {
        let Some(pred) = pred else { continue };
        let limit = alpha * gt.bbox.w.max(gt.bbox.h);
        for (j, joint) in gt.joints.iter().enumerate() {
            let (du, dv) = (pred[j].0 - joint.u, pred[j].1 - joint.v);
            if (du * du + dv * dv).sqrt() <= limit {
                hits[j] += 1;
            }
        }
    }
    let n = truths.len() as f64;
    let per_part: Vec<f64> = hits.iter().map(|&h| h as f64 / n).collect();
    let average = per_part.iter().sum::<f64>() / NUM_JOINTS as f64;
    Ok(PckResult { per_part, average, alpha, samples: truths.len() })
}

/// Whether difficult ground truths take part in AP accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApMode {
    /// Only normal persons: detections matched to difficult ones are ignored
    /// and missed difficult persons are not counted.
    Normal,
    /// Every annotated person counts.
    All,
}

impl ApMode {
    pub fn label(self) -> &'static str {
        match self {
            ApMode::Normal => "N",
            ApMode::All => "N+D",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub frame: usize,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBox {
    pub frame: usize,
    pub bbox: BBox,
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    /// `(recall, precision)` after each counted detection, best score first.
    pub curve: Vec<(f64, f64)>,
    pub mode: ApMode,
}

/// Greedy matching in descending score order. Returns, per detection in that
/// order, its index and `Some(true)` for a TP, `Some(false)` for an FP or
/// `None` when it matched an ignored difficult person; plus the positive count.
fn match_detections(dets: &[ScoredBox], truths: &[TruthBox], iou_thr: f64, mode: ApMode) -> (Vec<(usize, Option<bool>)>, usize) {
    let positives = truths.iter().filter(|t| mode == ApMode::All || !t.difficult).count();
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(dets[a].frame.cmp(&dets[b].frame)).then(a.cmp(&b)));
    let mut matched = vec![false; truths.len()];
    let mut out = Vec::with_capacity(dets.len());
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, t) in truths.iter().enumerate() {
            if t.frame != d.frame || matched[g] {
                continue;
            }
            let o = iou(&d.bbox, &t.bbox);
            if o > iou_thr && best.is_none_or(|(_, b)| o > b) {
                best = Some((g, o));
            }
        }
        let outcome = match best {
            Some((g, _)) => {
                matched[g] = true;
                (mode == ApMode::All || !truths[g].difficult).then_some(true)
            }
            None => Some(false),
        };
        out.push((i, outcome));
    }
    (out, positives)
}

pub fn precision_recall_curve(dets: &[ScoredBox], truths: &[TruthBox], iou_thr: f64, mode: ApMode) -> Result<Vec<(f64, f64)>> {
    let (outcomes, positives) = match_detections(dets, truths, iou_thr, mode);
    if positives == 0 {
        return Err(Error::NoGroundTruth);
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::new();
    for (_, o) in outcomes {
        match o {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => continue,
        }
        curve.push((tp as f64 / positives as f64, tp as f64 / (tp + fp) as f64));
    }
    Ok(curve)
}

/// Score threshold with the highest F1 (ties to the higher threshold), with
/// that F1. Thresholds are detection scores; a detection counts when its score
/// is at or above the threshold. `None` without positives or detections.
pub fn max_f1_threshold(dets: &[ScoredBox], truths: &[TruthBox], iou_thr: f64, mode: ApMode) -> Option<(f64, f64)> {
    let (outcomes, positives) = match_detections(dets, truths, iou_thr, mode);
    if positives == 0 {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    for (k, &(i, o)) in outcomes.iter().enumerate() {
        match o {
            Some(true) => tp += 1,
            Some(false) => fp += 1,
            None => {}
        }
        // Only cut between distinct scores.
        if outcomes.get(k + 1).is_some_and(|&(j, _)| dets[j].score == dets[i].score) {
            continue;
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + positives - tp) as f64;
        if best.is_none_or(|(_, b)| f1 > b) {
            best = Some((dets[i].score, f1));
        }
    }
    best
}

/// Area under the stepwise precision-recall curve.
pub fn average_precision(dets: &[ScoredBox], truths: &[TruthBox], iou_thr: f64, mode: ApMode) -> Result<ApResult> {
    let curve = precision_recall_curve(dets, truths, iou_thr, mode)?;
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for &(r, p) in &curve {
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Ok(ApResult { ap, curve, mode })
}
