//! Histogram of depth differences.
//!
//! Four zero-sum 3x3 kernels are correlated with the depth map at several
//! scales and every response is divided by the depth at the patch center,
//! which makes it invariant to a global depth scale. Responses are quantized
//! into uniform bins over `[-tau, tau]` and counted per cell into a
//! `kernel x scale x level` histogram, then L2-Hys normalized.
//!
//! Scale `s` is the depth map average-pooled `s` times by a factor of two;
//! a response at pooled pixel `(x, y)` is credited to the base-resolution
//! cell containing pixel `(x * 2^s, y * 2^s)`. Pixels whose 3x3 patch holds
//! an invalid depth do not vote.

use serde::{Deserialize, Serialize};

use super::{grid_for, l2hys_in_place, FeatureMap};
use crate::error::{Error, Result};
use crate::image::DepthImage;

/// The four kernels, row-major, applied by correlation (no flip).
pub const HDD_KERNELS: [[[i8; 3]; 3]; 4] = [
    [[0, 0, 0], [-1, 0, 1], [0, 0, 0]],
    [[-1, 0, 0], [0, 0, 0], [0, 0, 1]],
    [[0, -1, 0], [0, 0, 0], [0, 1, 0]],
    [[0, 0, -1], [0, 0, 0], [1, 0, 0]],
];

/// `(dx, dy)` of the -1 tap and the +1 tap of each kernel.
const TAPS: [((i64, i64), (i64, i64)); 4] =
    [((-1, 0), (1, 0)), ((-1, -1), (1, 1)), ((0, -1), (0, 1)), ((1, -1), (-1, 1))];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HddConfig {
    pub n_scales: usize,
    pub quant_levels: usize,
    /// Responses are clamped into `[-response_clip, response_clip]` before binning.
    pub response_clip: f64,
}

impl Default for HddConfig {
    fn default() -> Self {
        Self { n_scales: 3, quant_levels: 10, response_clip: 0.3 }
    }
}

impl HddConfig {
    pub fn channels(&self) -> usize {
        HDD_KERNELS.len() * self.n_scales * self.quant_levels
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 || self.quant_levels < 2 {
            return Err(Error::ConfigInvalid(format!(
                "HDD needs n_scales >= 1 and quant_levels >= 2, got {} and {}",
                self.n_scales, self.quant_levels
            )));
        }
        if !(self.response_clip > 0.0) {
            return Err(Error::ConfigInvalid("HDD response clip must be positive".into()));
        }
        Ok(())
    }

    /// Quantization bin of a response. Zero sits on the boundary between the
    /// two middle bins and falls into the upper one.
    pub fn bin(&self, r: f64) -> usize {
        let width = 2.0 * self.response_clip / self.quant_levels as f64;
        let b = (r / width + (self.quant_levels / 2) as f64).floor();
        b.clamp(0.0, (self.quant_levels - 1) as f64) as usize
    }

    pub fn channel(&self, kernel: usize, scale: usize, level: usize) -> usize {
        (kernel * self.n_scales + scale) * self.quant_levels + level
    }
}

/// The depth map and its pooled versions.
pub struct HddScaleSpace {
    scales: Vec<DepthImage>,
}

impl HddScaleSpace {
    pub fn new(depth: &DepthImage, n_scales: usize) -> Self {
        let mut scales = vec![depth.clone()];
        for _ in 1..n_scales {
            let next = scales.last().unwrap().pool2();
            scales.push(next);
        }
        Self { scales }
    }

    pub fn scale(&self, s: usize) -> &DepthImage {
        &self.scales[s]
    }

    fn patch_valid(img: &DepthImage, x: usize, y: usize) -> bool {
        (y - 1..=y + 1).all(|v| (x - 1..=x + 1).all(|u| img.is_valid(u, v)))
    }

    /// Normalized response of `kernel` at `(x, y)` of scale `s`, or `None` at
    /// the border or when the patch holds an invalid depth.
    #[inline]
    fn response_unchecked(img: &DepthImage, kernel: usize, x: usize, y: usize) -> f64 {
        let ((mx, my), (px, py)) = TAPS[kernel];
        let neg = img.get((x as i64 + mx) as usize, (y as i64 + my) as usize);
        let pos = img.get((x as i64 + px) as usize, (y as i64 + py) as usize);
        (pos - neg) / img.get(x, y)
    }

    pub fn response(&self, kernel: usize, s: usize, x: usize, y: usize) -> Result<f64> {
        let img = self
            .scales
            .get(s)
            .ok_or_else(|| Error::ConfigInvalid(format!("scale {s} out of range")))?;
        if kernel >= HDD_KERNELS.len() {
            return Err(Error::ConfigInvalid(format!("kernel {kernel} out of range")));
        }
        if x == 0 || y == 0 || x + 1 >= img.width() || y + 1 >= img.height() {
            return Err(Error::OutOfBounds { col: x as i64, row: y as i64, cells_w: img.width(), cells_h: img.height() });
        }
        if !img.is_valid(x, y) {
            return Err(Error::InvalidDepth { u: x as f64, v: y as f64 });
        }
        Ok(Self::response_unchecked(img, kernel, x, y))
    }
}

/// Response of `kernel` (0-based) at pixel `pos` of scale `s`.
pub fn hdd_response(depth: &DepthImage, kernel: usize, s: usize, pos: (usize, usize)) -> Result<f64> {
    HddScaleSpace::new(depth, s + 1).response(kernel, s, pos.0, pos.1)
}

pub fn compute_hdd(depth: &DepthImage, cfg: &HddConfig, cell_size: usize) -> Result<FeatureMap> {
    cfg.validate()?;
    let (cw, ch) = grid_for(depth.width(), depth.height(), cell_size)?;
    let channels = cfg.channels();
    let space = HddScaleSpace::new(depth, cfg.n_scales);
    let mut hist = vec![0.0f64; cw * ch * channels];
    for s in 0..cfg.n_scales {
        let img = space.scale(s);
        let factor = 1usize << s;
        if img.width() < 3 || img.height() < 3 {
            continue;
        }
        for y in 1..img.height() - 1 {
            let row = y * factor / cell_size;
            if row >= ch {
                break;
            }
            for x in 1..img.width() - 1 {
                let col = x * factor / cell_size;
                if col >= cw {
                    break;
                }
                if !HddScaleSpace::patch_valid(img, x, y) {
                    continue;
                }
                let base = (row * cw + col) * channels;
                for k in 0..HDD_KERNELS.len() {
                    let r = HddScaleSpace::response_unchecked(img, k, x, y);
                    hist[base + cfg.channel(k, s, cfg.bin(r))] += 1.0;
                }
            }
        }
    }
    let mut out = FeatureMap::zeros(cw, ch, channels, cell_size, 1.0);
    for (i, cell) in hist.chunks_exact_mut(channels).enumerate() {
        l2hys_in_place(cell);
        for (d, s) in out.values[i * channels..(i + 1) * channels].iter_mut().zip(cell.iter()) {
            *d = *s as f32;
        }
    }
    Ok(out)
}
