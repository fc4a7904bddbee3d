//! Per-node lists of states that are close in 3D.

use serde::{Deserialize, Serialize};

use super::state::StateSpace;
use crate::geometry::{CameraIntrinsics, Point3};

/// How candidate windows are chosen when building the neighborhood map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// Square window of radius `maxDist / (res * depth)` around the node.
    #[default]
    Paper,
    /// Exact image-plane bounding box of the 3D ball, so no neighbor is missed.
    Conservative,
    /// No pruning; inference scans every valid pair.
    Off,
}

impl PruneMode {
    pub fn name(self) -> &'static str {
        match self {
            PruneMode::Paper => "paper",
            PruneMode::Conservative => "conservative",
            PruneMode::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [PruneMode::Paper, PruneMode::Conservative, PruneMode::Off].into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// Compressed adjacency: the list of node `i` is `entries[offsets[i]..offsets[i + 1]]`,
/// sorted by distance and then by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMap {
    pub max_dist: f64,
    offsets: Vec<usize>,
    entries: Vec<(f64, u32)>,
}

impl NeighborhoodMap {
    pub fn neighbors(&self, i: usize) -> &[(f64, u32)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Directed edge count.
    pub fn num_edges(&self) -> usize {
        self.entries.len()
    }

    /// Sorted set of directed `(i, j)` pairs.
    pub fn edge_set(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> =
            (0..self.num_nodes()).flat_map(|i| self.neighbors(i).iter().map(move |&(_, j)| (i as u32, j))).collect();
        out.sort_unstable();
        out
    }

    fn from_lists(max_dist: f64, lists: Vec<Vec<(f64, u32)>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut entries = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            entries.extend(l);
            offsets.push(entries.len());
        }
        Self { max_dist, offsets, entries }
    }
}

/// Range of `t = X / Z` over a ball of radius `r` centered at `(x, z)` in the
/// X-Z plane, or `None` when the ball reaches the camera plane.
fn ratio_range(x: f64, z: f64, r: f64) -> Option<(f64, f64)> {
    let den = z * z - r * r;
    if den <= 0.0 {
        return None;
    }
    let root = (x * x + den).sqrt();
    Some(((x * z - r * root) / den, (x * z + r * root) / den))
}

/// Inclusive cell-index window `[lo, hi]` whose node pixels can fall in `[a, b]` native pixels.
fn cell_range(a: f64, b: f64, scale: f64, cell_size: usize, n: usize) -> Option<(usize, usize)> {
    let cs = cell_size as f64;
    let lo = (((a + 0.5) * scale - cs / 2.0) / cs - 1e-9).ceil().max(0.0);
    let hi = (((b + 0.5) * scale - cs / 2.0) / cs + 1e-9).floor().min(n as f64 - 1.0);
    if hi < lo {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

fn candidate_window(
    ss: &StateSpace,
    i: usize,
    p: Point3,
    intr: &CameraIntrinsics,
    max_dist: f64,
    mode: PruneMode,
) -> Option<((usize, usize), (usize, usize))> {
    let g = &ss.grid;
    let whole = ((0, g.cells_w - 1), (0, g.cells_h - 1));
    match mode {
        PruneMode::Off => Some(whole),
        PruneMode::Paper => {
            let level_res = intr.res / g.scale_x.min(g.scale_y);
            let radius = (max_dist / (level_res * p.z) / g.cell_size as f64 + 1e-9).floor();
            let n = &ss.nodes[i];
            let r = radius.min((g.cells_w + g.cells_h) as f64) as usize;
            Some((
                (n.col.saturating_sub(r), (n.col + r).min(g.cells_w - 1)),
                (n.row.saturating_sub(r), (n.row + r).min(g.cells_h - 1)),
            ))
        }
        PruneMode::Conservative => {
            let (tx, ty) = match (ratio_range(p.x, p.z, max_dist), ratio_range(p.y, p.z, max_dist)) {
                (Some(tx), Some(ty)) => (tx, ty),
                _ => return Some(whole),
            };
            let cols = cell_range(intr.cx + intr.fx * tx.0, intr.cx + intr.fx * tx.1, g.scale_x, g.cell_size, g.cells_w)?;
            let rows = cell_range(intr.cy + intr.fy * ty.0, intr.cy + intr.fy * ty.1, g.scale_y, g.cell_size, g.cells_h)?;
            Some((cols, rows))
        }
    }
}

/// Builds the neighborhood map: candidates from the mode's window are checked
/// in 3D and kept when strictly closer than `max_dist`. `intr` are the native
/// intrinsics the state space was lifted with.
pub fn build_neighborhood_map(ss: &StateSpace, intr: &CameraIntrinsics, max_dist: f64, mode: PruneMode) -> NeighborhoodMap {
    let lists = crate::par::map_indexed(ss.len(), |i| {
        let Some(p) = ss.nodes[i].point else { return Vec::new() };
        let Some(((c0, c1), (r0, r1))) = candidate_window(ss, i, p, intr, max_dist, mode) else { return Vec::new() };
        let mut list = Vec::new();
        for row in r0..=r1 {
            for col in c0..=c1 {
                let j = ss.id(col, row);
                if j == i {
                    continue;
                }
                if let Some(q) = ss.nodes[j].point {
                    let d = p.distance(q);
                    if d < max_dist {
                        list.push((d, j as u32));
                    }
                }
            }
        }
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        list
    });
    NeighborhoodMap::from_lists(max_dist, lists)
}

/// Exhaustive pairwise scan.
pub fn brute_force_neighbors(ss: &StateSpace, max_dist: f64) -> NeighborhoodMap {
    let lists = (0..ss.len())
        .map(|i| {
            let Some(p) = ss.nodes[i].point else { return Vec::new() };
            let mut list: Vec<(f64, u32)> = (0..ss.len())
                .filter(|&j| j != i)
                .filter_map(|j| ss.nodes[j].point.map(|q| (p.distance(q), j as u32)))
                .filter(|&(d, _)| d < max_dist)
                .collect();
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            list
        })
        .collect();
    NeighborhoodMap::from_lists(max_dist, lists)
}
