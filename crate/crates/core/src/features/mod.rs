//! Per-cell appearance descriptors and multi-scale feature pyramids.

mod hdd;
mod hog;
mod honv;
mod pyramid;

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::RgbdFrame;

pub use hdd::{compute_hdd, hdd_response, HddConfig, HddScaleSpace, HDD_KERNELS};
pub use hog::{compute_hog, compute_hog_planes, hog_histograms, HOG_CHANNELS};
pub use honv::{compute_honv, HONV_AZIMUTH_BINS, HONV_CHANNELS, HONV_ZENITH_BINS};
pub use pyramid::{build_pyramid, FeaturePyramid, PyramidConfig, PyramidLevel};

pub const DEFAULT_CELL_SIZE: usize = 6;

/// Dense grid of per-cell descriptor vectors, row-major, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub cells_w: usize,
    pub cells_h: usize,
    pub channels: usize,
    pub cell_size: usize,
    /// Scale of the image this map was computed on relative to the frame.
    pub scale: f64,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(cells_w: usize, cells_h: usize, channels: usize, cell_size: usize, scale: f64) -> Self {
        Self { cells_w, cells_h, channels, cell_size, scale, values: vec![0.0; cells_w * cells_h * channels] }
    }

    #[inline]
    pub fn cell(&self, col: usize, row: usize) -> &[f32] {
        let i = (row * self.cells_w + col) * self.channels;
        &self.values[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, col: usize, row: usize) -> &mut [f32] {
        let i = (row * self.cells_w + col) * self.channels;
        &mut self.values[i..i + self.channels]
    }

    pub fn num_cells(&self) -> usize {
        self.cells_w * self.cells_h
    }

    /// Copy with a zero border of `pad` cells on every side.
    pub fn padded(&self, pad: usize) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.cells_w + 2 * pad, self.cells_h + 2 * pad, self.channels, self.cell_size, self.scale);
        for row in 0..self.cells_h {
            let src = row * self.cells_w * self.channels;
            let dst = ((row + pad) * out.cells_w + pad) * self.channels;
            let n = self.cells_w * self.channels;
            out.values[dst..dst + n].copy_from_slice(&self.values[src..src + n]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Appends channel blocks of several maps on the same grid.
pub fn concat_features(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let first = maps.first().ok_or_else(|| Error::GridMismatch("no maps to concatenate".into()))?;
    for m in &maps[1..] {
        if m.cells_w != first.cells_w || m.cells_h != first.cells_h || m.cell_size != first.cell_size {
            return Err(Error::GridMismatch(format!(
                "{}x{} (cell {}) vs {}x{} (cell {})",
                first.cells_w, first.cells_h, first.cell_size, m.cells_w, m.cells_h, m.cell_size
            )));
        }
    }
    if maps.len() == 1 {
        return Ok(first.clone());
    }
    let channels = maps.iter().map(|m| m.channels).sum();
    let mut out = FeatureMap::zeros(first.cells_w, first.cells_h, channels, first.cell_size, first.scale);
    for i in 0..first.num_cells() {
        let mut off = i * channels;
        for m in maps {
            out.values[off..off + m.channels].copy_from_slice(&m.values[i * m.channels..(i + 1) * m.channels]);
            off += m.channels;
        }
    }
    Ok(out)
}

/// L2 normalize, clip at 0.2, L2 normalize again. Zero stays zero.
pub fn l2hys_normalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    l2hys_in_place(&mut out);
    out
}

pub(crate) fn l2hys_in_place(v: &mut [f64]) {
    const CLIP: f64 = 0.2;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    for x in v.iter_mut() {
        *x = (*x / norm).clamp(-CLIP, CLIP);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descriptor {
    /// HOG on the color image (max-over-channels gradient).
    IHog,
    /// HOG on the depth image.
    DHog,
    /// Histogram of oriented normal vectors.
    Honv,
    /// Histogram of depth differences.
    Hdd,
}

impl Descriptor {
    pub fn name(self) -> &'static str {
        match self {
            Descriptor::IHog => "ihog",
            Descriptor::DHog => "dhog",
            Descriptor::Honv => "honv",
            Descriptor::Hdd => "hdd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "ihog" => Some(Descriptor::IHog),
            "dhog" => Some(Descriptor::DHog),
            "honv" => Some(Descriptor::Honv),
            "hdd" => Some(Descriptor::Hdd),
            _ => None,
        }
    }

    pub fn uses_depth(self) -> bool {
        !matches!(self, Descriptor::IHog)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorConfig {
    /// Concatenated in this order.
    pub descriptors: Vec<Descriptor>,
    pub cell_size: usize,
    pub hdd: HddConfig,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self { descriptors: vec![Descriptor::IHog, Descriptor::Hdd], cell_size: DEFAULT_CELL_SIZE, hdd: HddConfig::default() }
    }
}

impl DescriptorConfig {
    pub fn new(descriptors: Vec<Descriptor>) -> Self {
        Self { descriptors, ..Self::default() }
    }

    pub fn channels(&self) -> usize {
        self.descriptors
            .iter()
            .map(|d| match d {
                Descriptor::IHog | Descriptor::DHog => HOG_CHANNELS,
                Descriptor::Honv => HONV_CHANNELS,
                Descriptor::Hdd => self.hdd.channels(),
            })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.descriptors.is_empty() {
            return Err(Error::ConfigInvalid("at least one descriptor is required".into()));
        }
        if self.cell_size < 2 {
            return Err(Error::ConfigInvalid(format!("cell size must be >= 2, got {}", self.cell_size)));
        }
        self.hdd.validate()
    }

    /// Computes the concatenated descriptor map of a whole frame at its native resolution.
    pub fn compute(&self, frame: &RgbdFrame) -> Result<FeatureMap> {
        self.compute_parts(&frame.color, &frame.depth, &frame.intrinsics, 1.0)
    }

    pub(crate) fn compute_parts(
        &self,
        color: &crate::image::ColorImage,
        depth: &crate::image::DepthImage,
        intr: &crate::geometry::CameraIntrinsics,
        scale: f64,
    ) -> Result<FeatureMap> {
        self.validate()?;
        let cs = self.cell_size;
        let mut maps = Vec::with_capacity(self.descriptors.len());
        for d in &self.descriptors {
            let mut m = match d {
                Descriptor::IHog => {
                    let planes = color.planes();
                    let refs: Vec<&[f32]> = planes.iter().map(|p| p.as_slice()).collect();
                    compute_hog_planes(&refs, color.width(), color.height(), cs, None)?
                }
                Descriptor::DHog => hog::compute_depth_hog(depth, cs)?,
                Descriptor::Honv => compute_honv(depth, intr, cs)?,
                Descriptor::Hdd => compute_hdd(depth, &self.hdd, cs)?,
            };
            m.scale = scale;
            maps.push(m);
        }
        concat_features(&maps)
    }
}

pub(crate) fn grid_for(width: usize, height: usize, cell_size: usize) -> Result<(usize, usize)> {
    if width < cell_size || height < cell_size {
        return Err(Error::ImageTooSmall { width, height, min_width: cell_size, min_height: cell_size });
    }
    Ok((width / cell_size, height / cell_size))
}

// ---------------------------------------------------------------------------
// Debug dump: "PSFM", u32 version, u32 cells_w, u32 cells_h, u32 channels,
// u32 cell_size, f64 scale, then cells_w*cells_h*channels f32 (all LE).

const DUMP_MAGIC: &[u8; 4] = b"PSFM";
const DUMP_VERSION: u32 = 1;

pub fn write_feature_dump(map: &FeatureMap, mut w: impl Write) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_u32::<LittleEndian>(DUMP_VERSION)?;
    w.write_u32::<LittleEndian>(map.cells_w as u32)?;
    w.write_u32::<LittleEndian>(map.cells_h as u32)?;
    w.write_u32::<LittleEndian>(map.channels as u32)?;
    w.write_u32::<LittleEndian>(map.cell_size as u32)?;
    w.write_f64::<LittleEndian>(map.scale)?;
    for &v in &map.values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_feature_dump(mut r: impl Read) -> Result<FeatureMap> {
    let corrupt = |what: &str| Error::Format { path: "<feature dump>".into(), offset: 0, reason: what.to_string() };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.read_u32::<LittleEndian>()? != DUMP_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let cells_w = r.read_u32::<LittleEndian>()? as usize;
    let cells_h = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u32::<LittleEndian>()? as usize;
    let cell_size = r.read_u32::<LittleEndian>()? as usize;
    let scale = r.read_f64::<LittleEndian>()?;
    let n = cells_w * cells_h * channels;
    let mut values = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut values)?;
    Ok(FeatureMap { cells_w, cells_h, channels, cell_size, scale, values })
}
