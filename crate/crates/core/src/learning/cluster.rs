//! Part types from k-means on parent-relative displacements.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::samples::TrainingSample;
use crate::error::{Error, Result};
use crate::frame::{joint, NUM_JOINTS};
use crate::model::PartSpec;

/// Space in which displacements are clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClusterMode {
    /// Cells of each sample's level.
    #[default]
    #[serde(rename = "2d")]
    TwoD,
    /// Meters.
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeAssignment {
    /// `[sample][part]` type id.
    pub types: Vec<Vec<usize>>,
    /// Number of types kept per part.
    pub counts: Vec<usize>,
}

/// Lloyd's k-means with k-means++ seeding. Returns the label of every point;
/// labels of empty clusters are removed and the rest renumbered in order.
/// Ties go to the lowest center index.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng, max_iter: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    while centers.len() < k {
        let dist: Vec<f64> = points.iter().map(|p| centers.iter().map(|c| d2(p, c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = dist.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut r = rng.random_range(0.0..total);
        let mut pick = n - 1;
        for (i, &d) in dist.iter().enumerate() {
            if r < d {
                pick = i;
                break;
            }
            r -= d;
        }
        centers.push(points[pick].clone());
    }
    let nearest = |p: &[f64], centers: &[Vec<f64>]| {
        let mut best = (f64::INFINITY, 0);
        for (c, center) in centers.iter().enumerate() {
            let d = d2(p, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        best.1
    };
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..max_iter {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, (s, &m)) in sums.into_iter().zip(&counts).enumerate() {
            if m > 0 {
                centers[c] = s.into_iter().map(|x| x / m as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut remap = vec![usize::MAX; centers.len()];
    let mut used = 0;
    for c in 0..centers.len() {
        if labels.contains(&c) {
            remap[c] = used;
            used += 1;
        }
    }
    labels.into_iter().map(|l| remap[l]).collect()
}

/// Displacement of `part` from its parent (the root from the shoulder midpoint).
fn displacement(s: &TrainingSample, parts: &[PartSpec], part: usize, mode: ClusterMode) -> Option<Vec<f64>> {
    match mode {
        ClusterMode::TwoD => {
            let origin = match parts[part].parent {
                Some(q) => s.cells[q],
                None => {
                    let (a, b) = (s.cells[joint::L_SHOULDER], s.cells[joint::R_SHOULDER]);
                    ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0)
                }
            };
            Some(vec![s.cells[part].0 - origin.0, s.cells[part].1 - origin.1])
        }
        ClusterMode::ThreeD => {
            let p = s.points[part]?;
            let origin = match parts[part].parent {
                Some(q) => s.points[q]?,
                None => s.points[joint::L_SHOULDER]?.add(s.points[joint::R_SHOULDER]?).scale(0.5),
            };
            let d = p.sub(origin);
            Some(vec![d.x, d.y, d.z])
        }
    }
}

/// Clusters every part's displacement into at most `t` types. Parts with fewer
/// than `t` samples get fewer types. In 3D mode, samples without 3D joints join
/// the largest cluster of that part.
pub fn cluster_part_types(samples: &[TrainingSample], parts: &[PartSpec], t: usize, mode: ClusterMode, seed: u64) -> Result<TypeAssignment> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples(0));
    }
    if t == 0 {
        return Err(Error::ConfigInvalid("at least one part type is required".into()));
    }
    debug_assert_eq!(parts.len(), NUM_JOINTS);
    let mut types = vec![vec![0usize; parts.len()]; samples.len()];
    let mut counts = vec![1usize; parts.len()];
    for part in 0..parts.len() {
        let disp: Vec<Option<Vec<f64>>> = samples.iter().map(|s| displacement(s, parts, part, mode)).collect();
        let idx: Vec<usize> = (0..samples.len()).filter(|&i| disp[i].is_some()).collect();
        if idx.is_empty() {
            warn!("part {}: no sample has a usable displacement; using a single type", parts[part].name);
            continue;
        }
        let k = if idx.len() < t {
            warn!("part {}: {} samples for {t} types; reducing to {}", parts[part].name, idx.len(), idx.len());
            idx.len()
        } else {
            t
        };
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| disp[i].clone().unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(part as u64));
        let labels = kmeans(&pts, k, &mut rng, 100);
        let used = labels.iter().max().map_or(1, |m| m + 1);
        let mut sizes = vec![0usize; used];
        for &l in &labels {
            sizes[l] += 1;
        }
        let largest = (0..used).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap_or(0);
        for t in types.iter_mut() {
            t[part] = largest;
        }
        for (&i, &l) in idx.iter().zip(&labels) {
            types[i][part] = l;
        }
        counts[part] = used;
    }
    Ok(TypeAssignment { types, counts })
}
