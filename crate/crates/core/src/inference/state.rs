//! Cell-grid states lifted to 3D.

use crate::features::PyramidLevel;
use crate::geometry::{CameraIntrinsics, Point3};
use crate::image::DepthImage;

/// Placement of a grid of cells relative to the native frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub cells_w: usize,
    pub cells_h: usize,
    pub cell_size: usize,
    /// Level size over frame size, per axis.
    pub scale_x: f64,
    pub scale_y: f64,
    pub level: usize,
}

impl GridGeometry {
    pub fn native(cells_w: usize, cells_h: usize, cell_size: usize) -> Self {
        Self { cells_w, cells_h, cell_size, scale_x: 1.0, scale_y: 1.0, level: 0 }
    }

    pub fn of_level(level: &PyramidLevel) -> Self {
        Self {
            cells_w: level.features.cells_w,
            cells_h: level.features.cells_h,
            cell_size: level.features.cell_size,
            scale_x: level.scale_x,
            scale_y: level.scale_y,
            level: level.index,
        }
    }

    /// Native pixel at the center of cell `(col, row)`.
    pub fn cell_center(&self, col: f64, row: f64) -> (f64, f64) {
        let cs = self.cell_size as f64;
        ((col * cs + cs / 2.0) / self.scale_x - 0.5, (row * cs + cs / 2.0) / self.scale_y - 0.5)
    }

    /// Native pixel span `[a, b)` covered by cell index `i` along one axis.
    fn span(&self, i: usize, scale: f64, limit: usize) -> (usize, usize) {
        let cs = self.cell_size as f64;
        let a = ((i as f64 * cs) / scale + 1e-9).floor() as usize;
        let b = (((i + 1) as f64 * cs) / scale - 1e-9).ceil() as usize;
        (a.min(limit.saturating_sub(1)), b.clamp(a + 1, limit))
    }

    pub fn footprint(&self, col: usize, row: usize, width: usize, height: usize) -> ((usize, usize), (usize, usize)) {
        (self.span(col, self.scale_x, width), self.span(row, self.scale_y, height))
    }

    /// Real-valued cell coordinate of a native pixel.
    pub fn pixel_to_cell(&self, u: f64, v: f64) -> (f64, f64) {
        let cs = self.cell_size as f64;
        (((u + 0.5) * self.scale_x - cs / 2.0) / cs, ((v + 0.5) * self.scale_y - cs / 2.0) / cs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateNode {
    pub col: usize,
    pub row: usize,
    /// Native pixel of the cell center.
    pub u: f64,
    pub v: f64,
    /// Meters; 0 when the footprint holds no valid depth.
    pub depth: f64,
    pub point: Option<Point3>,
}

impl StateNode {
    pub fn is_valid(&self) -> bool {
        self.point.is_some()
    }
}

/// One node per grid cell, row-major.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub grid: GridGeometry,
    pub nodes: Vec<StateNode>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn id(&self, col: usize, row: usize) -> usize {
        row * self.grid.cells_w + col
    }

    pub fn node(&self, col: usize, row: usize) -> &StateNode {
        &self.nodes[self.id(col, row)]
    }

    pub fn valid_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_valid()).count()
    }

    /// A space with explicit per-node depths (0 = invalid), lifted at the cell centers.
    pub fn from_depths(grid: GridGeometry, depths: &[f64], intr: &CameraIntrinsics) -> Self {
        assert_eq!(depths.len(), grid.cells_w * grid.cells_h);
        let nodes = depths
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let (col, row) = (i % grid.cells_w, i / grid.cells_w);
                let (u, v) = grid.cell_center(col as f64, row as f64);
                let point = intr.reproject(u, v, z).ok();
                StateNode { col, row, u, v, depth: if point.is_some() { z } else { 0.0 }, point }
            })
            .collect();
        Self { grid, nodes }
    }
}

/// Lower quartile of the valid values (sorted index `(n - 1) / 4`); 0 if there are none.
pub(crate) fn lower_quartile(values: &mut Vec<f64>) -> f64 {
    values.retain(|&z| z > 0.0);
    if values.is_empty() {
        return 0.0;
    }
    let k = (values.len() - 1) / 4;
    let (_, m, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *m
}

/// Builds one node per cell of `grid`, with depth taken as the lower quartile of
/// the valid native depths under the cell.
pub fn build_state_space(grid: GridGeometry, depth: &DepthImage, intr: &CameraIntrinsics) -> StateSpace {
    let mut nodes = Vec::with_capacity(grid.cells_w * grid.cells_h);
    let mut buf = Vec::new();
    for row in 0..grid.cells_h {
        for col in 0..grid.cells_w {
            let ((u0, u1), (v0, v1)) = grid.footprint(col, row, depth.width(), depth.height());
            buf.clear();
            for v in v0..v1 {
                for u in u0..u1 {
                    buf.push(depth.get(u, v));
                }
            }
            let z = lower_quartile(&mut buf);
            let (u, v) = grid.cell_center(col as f64, row as f64);
            let point = intr.reproject(u, v, z).ok();
            nodes.push(StateNode { col, row, u, v, depth: if point.is_some() { z } else { 0.0 }, point });
        }
    }
    StateSpace { grid, nodes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_depth_gives_a_plane() {
        let d = DepthImage::from_fn(60, 48, |_, _| 2.5).unwrap();
        let intr = CameraIntrinsics::centered(100.0, 60, 48).unwrap();
        let ss = build_state_space(GridGeometry::native(10, 8, 6), &d, &intr);
        assert_eq!(ss.len(), 80);
        assert!(ss.nodes.iter().all(|n| n.point.unwrap().z == 2.5));
        let c = ss.node(4, 3);
        assert_eq!((c.u, c.v), (26.5, 20.5));
    }

    #[test]
    fn footprint_quartile() {
        // Two columns of every cell at 1 m, the other four at 3 m.
        let d = DepthImage::from_fn(12, 6, |u, _| if u % 6 < 2 { 1.0 } else { 3.0 }).unwrap();
        let intr = CameraIntrinsics::centered(100.0, 12, 6).unwrap();
        let ss = build_state_space(GridGeometry::native(2, 1, 6), &d, &intr);
        assert_eq!(ss.nodes[0].depth, 1.0);
        assert_eq!(ss.nodes[1].depth, 1.0);
        let d = DepthImage::from_fn(6, 6, |u, v| if u == 0 && v < 4 { 1.0 } else { 3.0 }).unwrap();
        let ss = build_state_space(GridGeometry::native(1, 1, 6), &d, &intr);
        assert_eq!(ss.nodes[0].depth, 3.0);
        let d2 = DepthImage::from_fn(6, 6, |u, v| if u + v < 4 { 0.0 } else { 1.0 + (u * 6 + v) as f64 * 0.01 }).unwrap();
        let ss2 = build_state_space(GridGeometry::native(1, 1, 6), &d2, &intr);
        let mut valid: Vec<f64> = d2.data().iter().copied().filter(|&z| z > 0.0).collect();
        valid.sort_by(|a, b| a.total_cmp(b));
        assert_eq!(ss2.nodes[0].depth, valid[(valid.len() - 1) / 4]);
    }

    #[test]
    fn holes_are_flagged() {
        let d = DepthImage::from_fn(12, 6, |u, _| if u < 6 { 0.0 } else { 2.0 }).unwrap();
        let intr = CameraIntrinsics::centered(100.0, 12, 6).unwrap();
        let ss = build_state_space(GridGeometry::native(2, 1, 6), &d, &intr);
        assert!(!ss.nodes[0].is_valid() && ss.nodes[0].depth == 0.0);
        assert!(ss.nodes[1].is_valid());
    }

    #[test]
    fn scaled_grid_maps_back() {
        let g = GridGeometry { cells_w: 5, cells_h: 4, cell_size: 6, scale_x: 0.5, scale_y: 0.5, level: 1 };
        let (u, v) = g.cell_center(2.0, 1.0);
        let (c, r) = g.pixel_to_cell(u, v);
        assert!((c - 2.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
        assert_eq!(g.footprint(1, 0, 100, 100), ((12, 24), (0, 12)));
    }
}
