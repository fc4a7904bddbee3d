//! Histogram of oriented normal vectors.
//!
//! Normals come from the cross product of the central-difference tangent
//! vectors of the back-projected depth map, oriented toward the camera.
//! Each pixel votes once into a (zenith, azimuth) bin; cells are L2-Hys
//! normalized. Zenith bins are 18 degrees wide starting at 0; azimuth bins
//! are 45 degrees wide and centered on multiples of 45 degrees.

use std::f64::consts::PI;

use super::{grid_for, l2hys_in_place, FeatureMap};
use crate::error::Result;
use crate::geometry::CameraIntrinsics;
use crate::image::DepthImage;

pub const HONV_ZENITH_BINS: usize = 5;
pub const HONV_AZIMUTH_BINS: usize = 8;
pub const HONV_CHANNELS: usize = HONV_ZENITH_BINS * HONV_AZIMUTH_BINS;

/// `(zenith_bin, azimuth_bin)` of the normal at `(u, v)`, if its neighborhood is valid.
pub(crate) fn normal_bin(depth: &DepthImage, intr: &CameraIntrinsics, u: usize, v: usize) -> Option<(usize, usize)> {
    let (w, h) = (depth.width(), depth.height());
    let (um, up) = (u.saturating_sub(1), (u + 1).min(w - 1));
    let (vm, vp) = (v.saturating_sub(1), (v + 1).min(h - 1));
    if um == up || vm == vp {
        return None;
    }
    let p = |x: usize, y: usize| depth.point_at(x, y, intr).ok();
    let (_c, l, r, t, b) = (p(u, v)?, p(um, v)?, p(up, v)?, p(u, vm)?, p(u, vp)?);
    let mut n = r.sub(l).cross(b.sub(t));
    if n.z > 0.0 {
        n = n.scale(-1.0);
    }
    let len = n.norm();
    if len == 0.0 {
        return None;
    }
    let zenith = (-n.z / len).clamp(-1.0, 1.0).acos();
    let zb = ((zenith / (PI / 2.0) * HONV_ZENITH_BINS as f64) as usize).min(HONV_ZENITH_BINS - 1);
    // `+ 0.0` folds negative zeros so a straight-on normal lands in bin 0.
    let azimuth = (n.y + 0.0).atan2(n.x + 0.0);
    let width = 2.0 * PI / HONV_AZIMUTH_BINS as f64;
    let ab = (((azimuth + width / 2.0) / width).floor() as i64).rem_euclid(HONV_AZIMUTH_BINS as i64) as usize;
    Some((zb, ab))
}

pub fn compute_honv(depth: &DepthImage, intr: &CameraIntrinsics, cell_size: usize) -> Result<FeatureMap> {
    let (cw, ch) = grid_for(depth.width(), depth.height(), cell_size)?;
    let mut out = FeatureMap::zeros(cw, ch, HONV_CHANNELS, cell_size, 1.0);
    let mut hist = vec![0.0f64; HONV_CHANNELS];
    for row in 0..ch {
        for col in 0..cw {
            hist.iter_mut().for_each(|h| *h = 0.0);
            for v in row * cell_size..(row + 1) * cell_size {
                for u in col * cell_size..(col + 1) * cell_size {
                    if let Some((zb, ab)) = normal_bin(depth, intr, u, v) {
                        hist[zb * HONV_AZIMUTH_BINS + ab] += 1.0;
                    }
                }
            }
            l2hys_in_place(&mut hist);
            for (d, s) in out.cell_mut(col, row).iter_mut().zip(&hist) {
                *d = *s as f32;
            }
        }
    }
    Ok(out)
}
