//! Positive training samples: annotated poses snapped to a pyramid level.

use crate::error::{Error, Result};
use crate::features::PyramidConfig;
use crate::frame::{joint, PersonAnnotation, RgbdFrame, NUM_JOINTS};
use crate::geometry::Point3;
use crate::inference::GridGeometry;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub frame: usize,
    pub person: usize,
    pub level: usize,
    /// Joint positions in cells of `level`, not rounded.
    pub cells: [(f64, f64); NUM_JOINTS],
    /// 3D joints, where known.
    pub points: [Option<Point3>; NUM_JOINTS],
}

impl TrainingSample {
    /// Nearest cell of every joint, clamped to the grid.
    pub fn snapped(&self, grid: &GridGeometry) -> [(usize, usize); NUM_JOINTS] {
        self.cells.map(|(c, r)| {
            let col = c.round().clamp(0.0, (grid.cells_w - 1) as f64) as usize;
            let row = r.round().clamp(0.0, (grid.cells_h - 1) as f64) as usize;
            (col, row)
        })
    }
}

fn mid(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
}

/// Pixel distance between the shoulder midpoint and the hip midpoint.
pub fn pose_extent(a: &PersonAnnotation) -> f64 {
    let p = |j: usize| (a.joints[j].u, a.joints[j].v);
    let s = mid(p(joint::L_SHOULDER), p(joint::R_SHOULDER));
    let h = mid(p(joint::L_HIP), p(joint::R_HIP));
    ((s.0 - h.0).powi(2) + (s.1 - h.1).powi(2)).sqrt()
}

/// The `q`-quantile (lower element) of the extents.
pub fn canonical_extent(extents: &[f64], q: f64) -> Result<f64> {
    let mut v: Vec<f64> = extents.iter().copied().filter(|e| *e > 0.0).collect();
    if v.is_empty() {
        return Err(Error::InsufficientSamples(0));
    }
    v.sort_by(f64::total_cmp);
    Ok(v[((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize])
}

/// Level whose scaled extent is closest to `canonical` in log space; lowest level on ties.
pub fn choose_level(extent: f64, canonical: f64, scales: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, &s) in scales.iter().enumerate() {
        let d = ((extent * s) / canonical).ln().abs();
        if d < best.0 - 1e-12 {
            best = (d, k);
        }
    }
    best.1
}

/// Grids of every pyramid level of a `w x h` frame, without computing features.
pub fn level_grids(cfg: &PyramidConfig, cell_size: usize, w: usize, h: usize) -> Vec<GridGeometry> {
    cfg.level_sizes(w, h, cell_size)
        .into_iter()
        .enumerate()
        .map(|(k, (lw, lh))| GridGeometry {
            cells_w: lw / cell_size,
            cells_h: lh / cell_size,
            cell_size,
            scale_x: lw as f64 / w as f64,
            scale_y: lh as f64 / h as f64,
            level: k,
        })
        .collect()
}

/// 3D joints from the annotation when present, else from the depth under each joint pixel.
pub fn joint_points(frame: &RgbdFrame, a: &PersonAnnotation) -> [Option<Point3>; NUM_JOINTS] {
    if let Some(p) = a.joints3d {
        return p.map(Some);
    }
    a.joints.map(|j| {
        let (u, v) = (j.u.round() as usize, j.v.round() as usize);
        frame.depth.point_at(u.min(frame.width() - 1), v.min(frame.height() - 1), &frame.intrinsics).ok()
    })
}

/// Builds samples from every annotation with a pose (more than six visible joints).
/// Each is assigned the level where its shoulder-to-hip extent is closest to `canonical`.
pub fn build_samples(frames: &[RgbdFrame], grids: &[Vec<GridGeometry>], canonical: f64) -> Vec<TrainingSample> {
    let mut out = Vec::new();
    for (f, frame) in frames.iter().enumerate() {
        let levels = &grids[f];
        if levels.is_empty() {
            continue;
        }
        let scales: Vec<f64> = levels.iter().map(|g| g.scale_x).collect();
        for (p, a) in frame.annotations.iter().enumerate() {
            let extent = pose_extent(a);
            if !a.has_pose() || extent <= 0.0 {
                continue;
            }
            let level = choose_level(extent, canonical, &scales);
            let g = &levels[level];
            out.push(TrainingSample {
                frame: f,
                person: p,
                level,
                cells: a.joints.map(|j| g.pixel_to_cell(j.u, j.v)),
                points: joint_points(frame, a),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_choice_in_log_space() {
        let scales = [1.0, 0.8, 0.64, 0.512];
        assert_eq!(choose_level(30.0, 30.0, &scales), 0);
        assert_eq!(choose_level(60.0, 30.0, &scales), 3);
        assert_eq!(choose_level(37.5, 30.0, &scales), 1);
        assert_eq!(choose_level(10.0, 30.0, &scales), 0);
    }

    #[test]
    fn quantile_is_a_lower_element() {
        assert_eq!(canonical_extent(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.1).unwrap(), 1.0);
        assert_eq!(canonical_extent(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap(), 3.0);
        assert!(canonical_extent(&[], 0.5).is_err());
    }

    #[test]
    fn grids_match_pyramid() {
        let cfg = PyramidConfig { scale_step: 2.0, min_cells: 5, max_levels: 3 };
        let g = level_grids(&cfg, 6, 120, 90);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].cells_w, g[0].cells_h, g[1].cells_w, g[1].cells_h), (20, 15, 10, 7));
        assert_eq!(g[1].scale_x, 0.5);
    }
}
