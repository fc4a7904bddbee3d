//! 31-channel HOG: 18 contrast-sensitive bins, 9 contrast-insensitive bins
//! and 4 texture-energy channels per cell, each normalized against the four
//! 2x2 blocks that contain the cell and truncated at 0.2.

use super::{grid_for, FeatureMap};
use crate::error::Result;
use crate::image::DepthImage;

pub const HOG_CHANNELS: usize = 31;
const ORIENTATIONS: usize = 9;
const EPS: f64 = 1e-4;
const TRUNC: f64 = 0.2;
/// Depth in meters is multiplied by this before D-HOG so gradients have a
/// magnitude comparable to 8-bit intensities.
const DEPTH_SCALE: f32 = 100.0;

fn unit_directions() -> ([f64; ORIENTATIONS], [f64; ORIENTATIONS]) {
    let mut uu = [0.0; ORIENTATIONS];
    let mut vv = [0.0; ORIENTATIONS];
    for o in 0..ORIENTATIONS {
        let a = o as f64 * std::f64::consts::PI / ORIENTATIONS as f64;
        uu[o] = a.cos();
        vv[o] = a.sin();
    }
    (uu, vv)
}

/// Raw 18-bin orientation histograms per cell, before any normalization.
/// Each pixel votes its gradient magnitude (max over planes) into the
/// nearest orientation bin, spread bilinearly over the four nearest cells.
pub fn hog_histograms(
    planes: &[&[f32]],
    width: usize,
    height: usize,
    cell_size: usize,
    valid: Option<&[bool]>,
) -> Result<(usize, usize, Vec<f64>)> {
    let (cw, ch) = grid_for(width, height, cell_size)?;
    let (uu, vv) = unit_directions();
    let mut hist = vec![0.0f64; cw * ch * 2 * ORIENTATIONS];
    let cs = cell_size as f64;
    let ok = |u: usize, v: usize| valid.is_none_or(|m| m[v * width + u]);

    for y in 0..height {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(height - 1));
        for x in 0..width {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(width - 1));
            if valid.is_some() && !(ok(x, y) && ok(xm, y) && ok(xp, y) && ok(x, ym) && ok(x, yp)) {
                continue;
            }
            let (mut dx, mut dy, mut mag2) = (0.0f64, 0.0f64, 0.0f64);
            for p in planes {
                let gx = (p[y * width + xp] - p[y * width + xm]) as f64;
                let gy = (p[yp * width + x] - p[ym * width + x]) as f64;
                let m2 = gx * gx + gy * gy;
                if m2 > mag2 {
                    (dx, dy, mag2) = (gx, gy, m2);
                }
            }
            if mag2 == 0.0 {
                continue;
            }
            let mag = mag2.sqrt();
            let (mut best_dot, mut best_o) = (0.0, 0usize);
            for o in 0..ORIENTATIONS {
                let dot = uu[o] * dx + vv[o] * dy;
                if dot > best_dot {
                    (best_dot, best_o) = (dot, o);
                } else if -dot > best_dot {
                    (best_dot, best_o) = (-dot, o + ORIENTATIONS);
                }
            }

            let xp_ = (x as f64 + 0.5) / cs - 0.5;
            let yp_ = (y as f64 + 0.5) / cs - 0.5;
            let ixp = xp_.floor() as i64;
            let iyp = yp_.floor() as i64;
            let vx0 = xp_ - ixp as f64;
            let vy0 = yp_ - iyp as f64;
            for (cx, wx) in [(ixp, 1.0 - vx0), (ixp + 1, vx0)] {
                for (cy, wy) in [(iyp, 1.0 - vy0), (iyp + 1, vy0)] {
                    if cx >= 0 && cy >= 0 && (cx as usize) < cw && (cy as usize) < ch && wx * wy > 0.0 {
                        let idx = ((cy as usize) * cw + cx as usize) * 2 * ORIENTATIONS + best_o;
                        hist[idx] += wx * wy * mag;
                    }
                }
            }
        }
    }
    Ok((cw, ch, hist))
}

/// HOG on a single-channel image.
pub fn compute_hog(img: &[f32], width: usize, height: usize, cell_size: usize) -> Result<FeatureMap> {
    compute_hog_planes(&[img], width, height, cell_size, None)
}

/// HOG on a multi-plane image using the strongest plane's gradient per pixel.
pub fn compute_hog_planes(
    planes: &[&[f32]],
    width: usize,
    height: usize,
    cell_size: usize,
    valid: Option<&[bool]>,
) -> Result<FeatureMap> {
    let (cw, ch, hist) = hog_histograms(planes, width, height, cell_size, valid)?;
    let bins = 2 * ORIENTATIONS;
    let energy: Vec<f64> = (0..cw * ch)
        .map(|i| {
            let h = &hist[i * bins..(i + 1) * bins];
            (0..ORIENTATIONS).map(|o| (h[o] + h[o + ORIENTATIONS]).powi(2)).sum()
        })
        .collect();
    let e = |x: i64, y: i64| energy[(y.clamp(0, ch as i64 - 1) as usize) * cw + x.clamp(0, cw as i64 - 1) as usize];

    let mut out = FeatureMap::zeros(cw, ch, HOG_CHANNELS, cell_size, 1.0);
    for y in 0..ch {
        for x in 0..cw {
            let (xi, yi) = (x as i64, y as i64);
            let block = |dx: i64, dy: i64| {
                let (x0, y0) = (xi + dx, yi + dy);
                1.0 / (e(x0, y0) + e(x0 + 1, y0) + e(x0, y0 + 1) + e(x0 + 1, y0 + 1) + EPS).sqrt()
            };
            let norms = [block(0, 0), block(-1, 0), block(0, -1), block(-1, -1)];
            let h = &hist[(y * cw + x) * bins..(y * cw + x + 1) * bins];
            let dst = out.cell_mut(x, y);
            let mut texture = [0.0f64; 4];
            for o in 0..bins {
                let mut sum = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let t = (h[o] * n).min(TRUNC);
                    sum += t;
                    texture[k] += t;
                }
                dst[o] = (0.5 * sum) as f32;
            }
            for o in 0..ORIENTATIONS {
                let v = h[o] + h[o + ORIENTATIONS];
                let sum: f64 = norms.iter().map(|n| (v * n).min(TRUNC)).sum();
                dst[bins + o] = (0.5 * sum) as f32;
            }
            for k in 0..4 {
                dst[bins + ORIENTATIONS + k] = (0.2357 * texture[k]) as f32;
            }
        }
    }
    Ok(out)
}

/// HOG on the depth channel; gradients touching invalid pixels are dropped.
pub(crate) fn compute_depth_hog(depth: &DepthImage, cell_size: usize) -> Result<FeatureMap> {
    let plane: Vec<f32> = depth.data().iter().map(|&z| z as f32 * DEPTH_SCALE).collect();
    let valid: Vec<bool> = depth.data().iter().map(|&z| z > 0.0).collect();
    compute_hog_planes(&[&plane], depth.width(), depth.height(), cell_size, Some(&valid))
}
