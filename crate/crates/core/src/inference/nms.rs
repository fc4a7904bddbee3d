//! Non-maximum suppression and the detections file.
//!
//! Detections file: `#` lines are comments; every other line is
//! `frame_id score x y w h level` followed by `u v type` for each part,
//! whitespace separated.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use super::{PartState, PoseDetection};
use crate::error::{Error, Result};
use crate::eval::iou;
use crate::frame::BBox;

pub(super) fn rank(a: &PoseDetection, b: &PoseDetection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.bbox.x.total_cmp(&b.bbox.x))
        .then(a.bbox.y.total_cmp(&b.bbox.y))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
        .then(a.level.cmp(&b.level))
}

/// Greedy suppression: highest score first, dropping anything whose box
/// overlaps a kept box with IoU above `overlap`.
pub fn nms(mut dets: Vec<PoseDetection>, overlap: f64) -> Vec<PoseDetection> {
    dets.sort_by(rank);
    let mut kept: Vec<PoseDetection> = Vec::new();
    for d in dets {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= overlap) {
            kept.push(d);
        }
    }
    kept
}

/// A detection tied to the frame it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_id: String,
    pub detection: PoseDetection,
}

pub fn write_detections(records: &[DetectionRecord], mut w: impl Write) -> Result<()> {
    writeln!(w, "# frame_id score x y w h level then u v type per part")?;
    for r in records {
        let d = &r.detection;
        write!(w, "{} {} {} {} {} {} {}", r.frame_id, d.score, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.level)?;
        for p in &d.parts {
            write!(w, " {} {} {}", p.u, p.v, p.ty)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_detections(r: impl BufRead) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in r.lines() {
        let line = line?;
        let start = offset;
        offset += line.len() as u64 + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| Error::Format { path: "<detections>".into(), offset: start, reason: reason.to_string() };
        let f: Vec<&str> = t.split_whitespace().collect();
        if f.len() < 7 || !(f.len() - 7).is_multiple_of(3) {
            return Err(bad("wrong number of fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed integer"));
        let mut parts = Vec::with_capacity((f.len() - 7) / 3);
        for c in f[7..].chunks(3) {
            parts.push(PartState { col: 0, row: 0, u: num(c[0])?, v: num(c[1])?, ty: int(c[2])? });
        }
        let detection = PoseDetection {
            level: int(f[6])?,
            score: num(f[1])?,
            bbox: BBox::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?),
            parts,
        };
        out.push(DetectionRecord { frame_id: f[0].to_string(), detection });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(score: f64, x: f64, w: f64) -> PoseDetection {
        PoseDetection { level: 0, score, parts: vec![], bbox: BBox::new(x, 0.0, w, 1.0) }
    }

    #[test]
    fn single_and_duplicate() {
        assert_eq!(nms(vec![det(1.0, 0.0, 1.0)], 0.5).len(), 1);
        let kept = nms(vec![det(1.0, 0.0, 1.0), det(2.0, 0.0, 1.0)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 2.0);
    }

    #[test]
    fn chain_keeps_first_and_last() {
        let a = det(3.0, 0.0, 10.0);
        let b = det(2.0, 1.0, 16.0);
        let c = det(1.0, 90.0 / 11.0, 10.0);
        assert!(iou(&a.bbox, &b.bbox) > 0.5 && iou(&b.bbox, &c.bbox) > 0.5);
        assert!((iou(&a.bbox, &c.bbox) - 0.1).abs() < 1e-12);
        let kept = nms(vec![c, a, b], 0.5);
        let scores: Vec<f64> = kept.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![3.0, 1.0]);
    }

    #[test]
    fn equal_scores_break_by_box() {
        let kept = nms(vec![det(1.0, 0.5, 1.0), det(1.0, 0.0, 1.0)], 0.3);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox.x, 0.0);
    }

    #[test]
    fn file_round_trip() {
        let d = PoseDetection {
            level: 2,
            score: -0.125,
            parts: vec![PartState { col: 0, row: 0, ty: 3, u: 10.5, v: 20.25 }],
            bbox: BBox::new(1.0, 2.0, 3.5, 4.0),
        };
        let recs = vec![DetectionRecord { frame_id: "f0007".into(), detection: d }];
        let mut buf = Vec::new();
        write_detections(&recs, &mut buf).unwrap();
        assert_eq!(read_detections(buf.as_slice()).unwrap(), recs);
        assert!(read_detections("f 1 2 3\n".as_bytes()).is_err());
    }
}
