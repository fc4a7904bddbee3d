//! Multi-scale feature pyramids.
//!
//! Every level is resampled directly from the full-resolution frame by box
//! averaging, so level `k` has size `floor(w / step^k)`. Depth keeps its
//! metric values; only the intrinsics follow the resampling.

use serde::{Deserialize, Serialize};

use super::{DescriptorConfig, FeatureMap};
use crate::error::{Error, Result};
use crate::frame::RgbdFrame;
use crate::geometry::CameraIntrinsics;
use crate::image::DepthImage;
use crate::par;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidConfig {
    /// Ratio between the sizes of consecutive levels.
    pub scale_step: f64,
    /// Smallest grid (in cells, both axes) a level may have; usually the template size.
    pub min_cells: usize,
    pub max_levels: usize,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self { scale_step: 1.25, min_cells: 5, max_levels: 8 }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_step > 1.0 && self.scale_step.is_finite()) {
            return Err(Error::ConfigInvalid(format!("scale step must be > 1, got {}", self.scale_step)));
        }
        if self.max_levels == 0 || self.min_cells == 0 {
            return Err(Error::ConfigInvalid("pyramid needs at least one level of at least one cell".into()));
        }
        Ok(())
    }

    /// Image sizes of all levels for a `w x h` frame.
    pub fn level_sizes(&self, w: usize, h: usize, cell_size: usize) -> Vec<(usize, usize)> {
        let min_px = self.min_cells * cell_size;
        let mut out = Vec::new();
        for k in 0..self.max_levels {
            let s = self.scale_step.powi(k as i32);
            let lw = (w as f64 / s + 1e-9).floor() as usize;
            let lh = (h as f64 / s + 1e-9).floor() as usize;
            if lw < min_px || lh < min_px {
                break;
            }
            out.push((lw, lh));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    /// Level width over frame width.
    pub scale_x: f64,
    pub scale_y: f64,
    pub intrinsics: CameraIntrinsics,
    pub depth: DepthImage,
    pub features: FeatureMap,
}

impl PyramidLevel {
    /// Frame pixel of a level pixel center.
    pub fn to_frame(&self, u: f64, v: f64) -> (f64, f64) {
        ((u + 0.5) / self.scale_x - 0.5, (v + 0.5) / self.scale_y - 0.5)
    }

    /// Level pixel of a frame pixel.
    pub fn from_frame(&self, u: f64, v: f64) -> (f64, f64) {
        ((u + 0.5) * self.scale_x - 0.5, (v + 0.5) * self.scale_y - 0.5)
    }
}

#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<PyramidLevel>,
    pub scale_step: f64,
    pub cell_size: usize,
}

fn scale_intrinsics(intr: &CameraIntrinsics, sx: f64, sy: f64) -> Result<CameraIntrinsics> {
    CameraIntrinsics::new(intr.fx * sx, intr.fy * sy, (intr.cx + 0.5) * sx - 0.5, (intr.cy + 0.5) * sy - 0.5)
}

pub fn build_pyramid(frame: &RgbdFrame, desc: &DescriptorConfig, cfg: &PyramidConfig) -> Result<FeaturePyramid> {
    cfg.validate()?;
    desc.validate()?;
    let (w, h) = (frame.width(), frame.height());
    let sizes = cfg.level_sizes(w, h, desc.cell_size);
    if sizes.is_empty() {
        let min = cfg.min_cells * desc.cell_size;
        return Err(Error::ImageTooSmall { width: w, height: h, min_width: min, min_height: min });
    }
    let indexed: Vec<(usize, (usize, usize))> = sizes.into_iter().enumerate().collect();
    let levels = par::map(&indexed, |&(index, (lw, lh))| -> Result<PyramidLevel> {
        let (sx, sy) = (lw as f64 / w as f64, lh as f64 / h as f64);
        let intrinsics = if index == 0 { frame.intrinsics } else { scale_intrinsics(&frame.intrinsics, sx, sy)? };
        let color = frame.color.resize(lw, lh);
        let depth = frame.depth.resize(lw, lh);
        let features = desc.compute_parts(&color, &depth, &intrinsics, sx)?;
        Ok(PyramidLevel { index, width: lw, height: lh, scale_x: sx, scale_y: sy, intrinsics, depth, features })
    });
    Ok(FeaturePyramid { levels: levels.into_iter().collect::<Result<_>>()?, scale_step: cfg.scale_step, cell_size: desc.cell_size })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Descriptor;
    use crate::image::ColorImage;

    fn frame(w: usize, h: usize) -> RgbdFrame {
        let color = ColorImage::from_vec(w, h, (0..w * h * 3).map(|i| ((i * 37) % 251) as u8).collect()).unwrap();
        let depth = DepthImage::from_fn(w, h, |u, v| 1.5 + 0.001 * ((u * 3 + v * 5) % 200) as f64).unwrap();
        RgbdFrame::new(color, depth, CameraIntrinsics::centered(300.0, w, h).unwrap(), vec![]).unwrap()
    }

    #[test]
    fn halving_sizes() {
        let cfg = PyramidConfig { scale_step: 2.0, min_cells: 5, max_levels: 4 };
        assert_eq!(cfg.level_sizes(640, 480, 6), vec![(640, 480), (320, 240), (160, 120), (80, 60)]);
    }

    #[test]
    fn single_level_equals_direct() {
        let f = frame(60, 48);
        let desc = DescriptorConfig::new(vec![Descriptor::IHog, Descriptor::Hdd, Descriptor::Honv]);
        let cfg = PyramidConfig { scale_step: 2.0, min_cells: 5, max_levels: 1 };
        let p = build_pyramid(&f, &desc, &cfg).unwrap();
        assert_eq!(p.levels.len(), 1);
        assert_eq!(p.levels[0].features, desc.compute(&f).unwrap());
    }

    #[test]
    fn metric_depth_is_kept() {
        let f = frame(120, 96);
        let p = build_pyramid(&f, &DescriptorConfig::default(), &PyramidConfig { scale_step: 2.0, ..Default::default() }).unwrap();
        let d = &p.levels[1].depth;
        let mean: f64 = d.data().iter().sum::<f64>() / d.data().len() as f64;
        assert!(mean > 1.5 && mean < 1.7);
        assert!((p.levels[1].intrinsics.fx - 150.0).abs() < 1e-12);
        let (u, v) = p.levels[1].to_frame(p.levels[1].intrinsics.cx, p.levels[1].intrinsics.cy);
        assert!((u - f.intrinsics.cx).abs() < 1e-9 && (v - f.intrinsics.cy).abs() < 1e-9);
    }

    #[test]
    fn tiny_image_rejected() {
        let f = frame(20, 20);
        assert!(matches!(
            build_pyramid(&f, &DescriptorConfig::default(), &PyramidConfig::default()),
            Err(Error::ImageTooSmall { .. })
        ));
    }
}
