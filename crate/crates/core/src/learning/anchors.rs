//! Mean parent-to-child offsets per type pair.

use log::warn;

use super::cluster::TypeAssignment;
use super::samples::TrainingSample;
use crate::model::{Anchor, PartSpec};

#[derive(Default, Clone, Copy)]
struct Acc {
    pix: [f64; 2],
    n_pix: usize,
    xyz: [f64; 3],
    dist: f64,
    n_xyz: usize,
}

impl Acc {
    fn add(&mut self, s: &TrainingSample, c: usize, p: usize) {
        self.pix[0] += s.cells[c].0 - s.cells[p].0;
        self.pix[1] += s.cells[c].1 - s.cells[p].1;
        self.n_pix += 1;
        if let (Some(a), Some(b)) = (s.points[c], s.points[p]) {
            let d = a.sub(b);
            self.xyz[0] += d.x;
            self.xyz[1] += d.y;
            self.xyz[2] += d.z;
            self.dist += d.norm();
            self.n_xyz += 1;
        }
    }

    fn merge(&mut self, o: &Acc) {
        for k in 0..2 {
            self.pix[k] += o.pix[k];
        }
        for k in 0..3 {
            self.xyz[k] += o.xyz[k];
        }
        self.dist += o.dist;
        self.n_pix += o.n_pix;
        self.n_xyz += o.n_xyz;
    }

    /// Mean, taking each half from `fallback` where this group has no samples.
    fn mean(&self, fallback: Option<Anchor>) -> Anchor {
        let fb = fallback.unwrap_or_default();
        let mut a = fb;
        if self.n_pix > 0 {
            let n = self.n_pix as f64;
            a.pix = [self.pix[0] / n, self.pix[1] / n];
        }
        if self.n_xyz > 0 {
            let n = self.n_xyz as f64;
            a.xyz = [self.xyz[0] / n, self.xyz[1] / n, self.xyz[2] / n];
            a.dist = self.dist / n;
        }
        a
    }
}

/// Anchors of every edge, indexed `[child][tc * types[parent] + tp]` like the
/// model's edge table (empty for the root). Pixel offsets are in cells of each
/// sample's level; 3D offsets skip samples missing either joint. A type pair
/// with no samples falls back to the type-agnostic mean of its edge.
pub fn compute_anchors(samples: &[TrainingSample], assignment: &TypeAssignment, parts: &[PartSpec]) -> Vec<Vec<Anchor>> {
    let counts = &assignment.counts;
    parts
        .iter()
        .map(|spec| {
            let Some(p) = spec.parent else { return Vec::new() };
            let c = spec.id;
            let mut groups = vec![Acc::default(); counts[c] * counts[p]];
            for (s, types) in samples.iter().zip(&assignment.types) {
                groups[types[c] * counts[p] + types[p]].add(s, c, p);
            }
            let mut all = Acc::default();
            for g in &groups {
                all.merge(g);
            }
            if all.n_xyz == 0 {
                warn!("edge {}: no sample has both 3D joints; 3D anchors are zero", spec.name);
            }
            let agnostic = all.mean(None);
            groups.iter().map(|g| g.mean(Some(agnostic))).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::NUM_JOINTS;
    use crate::geometry::Point3;

    fn chain() -> Vec<PartSpec> {
        (0..NUM_JOINTS).map(|i| PartSpec { id: i, parent: i.checked_sub(1), name: format!("p{i}") }).collect()
    }

    fn sample(child: (f64, f64), point: Option<Point3>) -> TrainingSample {
        let mut cells = [(0.0, 0.0); NUM_JOINTS];
        cells[1] = child;
        let mut points = [Some(Point3::new(0.0, 0.0, 2.0)); NUM_JOINTS];
        points[1] = point;
        TrainingSample { frame: 0, person: 0, level: 0, cells, points }
    }

    #[test]
    fn mean_of_two_displacements() {
        let samples = vec![sample((2.0, 3.0), Some(Point3::new(0.3, 0.0, 2.0))), sample((4.0, 5.0), Some(Point3::new(0.0, 0.4, 2.0)))];
        let asg = TypeAssignment { types: vec![vec![0; NUM_JOINTS]; 2], counts: vec![1; NUM_JOINTS] };
        let a = compute_anchors(&samples, &asg, &chain());
        assert!(a[0].is_empty());
        assert_eq!(a[1][0].pix, [3.0, 4.0]);
        assert!((a[1][0].xyz[0] - 0.15).abs() < 1e-12 && (a[1][0].xyz[1] - 0.2).abs() < 1e-12);
        assert!((a[1][0].dist - 0.35).abs() < 1e-12);
    }

    #[test]
    fn empty_pairs_and_missing_depth_fall_back() {
        let samples = vec![sample((2.0, 3.0), None), sample((6.0, 1.0), Some(Point3::new(0.0, 0.5, 2.0)))];
        let mut counts = vec![1; NUM_JOINTS];
        counts[1] = 3;
        let mut types = vec![vec![0; NUM_JOINTS]; 2];
        types[1][1] = 1;
        let a = compute_anchors(&samples, &TypeAssignment { types, counts }, &chain());
        assert_eq!(a[1].len(), 3);
        assert_eq!(a[1][0].pix, [2.0, 3.0]);
        // Type 0 has no depth: its 3D half comes from the whole edge.
        assert_eq!(a[1][0].xyz, [0.0, 0.5, 0.0]);
        assert_eq!(a[1][2].pix, [4.0, 2.0]);
        assert_eq!(a[1][2].dist, 0.5);
    }
}
