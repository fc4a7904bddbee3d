//! In-memory image buffers.

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3};

/// Metric depth map. Values are meters; `0.0` marks a missing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_vec(width, height, vec![0.0; width * height])
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!("depth image must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "depth buffer has {} values for {width}x{height}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|z| !(**z >= 0.0 && z.is_finite())) {
            return Err(Error::ConfigInvalid(format!("depth values must be finite and >= 0, found {bad}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        self.get(u, v) > 0.0
    }

    pub fn set(&mut self, u: usize, v: usize, z: f64) {
        debug_assert!(z >= 0.0 && z.is_finite());
        self.data[v * self.width + u] = z;
    }

    pub fn point_at(&self, u: usize, v: usize, intr: &CameraIntrinsics) -> Result<Point3> {
        if u >= self.width || v >= self.height {
            return Err(Error::InvalidDepth { u: u as f64, v: v as f64 });
        }
        intr.reproject(u as f64, v as f64, self.get(u, v))
    }

    /// Multiplies every depth by `c > 0`; invalid pixels stay invalid.
    pub fn scaled(&self, c: f64) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|z| z * c).collect() }
    }

    /// Average-pools `2x2` blocks. A block with any invalid pixel is invalid.
    pub fn pool2(&self) -> Self {
        let w = (self.width / 2).max(1);
        let h = (self.height / 2).max(1);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (u0, v0) = (2 * x, 2 * y);
                let u1 = (u0 + 1).min(self.width - 1);
                let v1 = (v0 + 1).min(self.height - 1);
                let vals = [self.get(u0, v0), self.get(u1, v0), self.get(u0, v1), self.get(u1, v1)];
                if vals.iter().all(|&z| z > 0.0) {
                    data.push((vals[0] + vals[1] + vals[2] + vals[3]) * 0.25);
                } else {
                    data.push(0.0);
                }
            }
        }
        Self { width: w, height: h, data }
    }

    /// Downsamples to `w x h`, averaging the valid source pixels whose
    /// centers fall in each target footprint. Depth values are not rescaled.
    pub fn resize(&self, w: usize, h: usize) -> Self {
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            let (v0, v1) = footprint(y, h, self.height);
            for x in 0..w {
                let (u0, u1) = footprint(x, w, self.width);
                let (mut sum, mut n) = (0.0, 0usize);
                for v in v0..v1 {
                    for u in u0..u1 {
                        let z = self.get(u, v);
                        if z > 0.0 {
                            sum += z;
                            n += 1;
                        }
                    }
                }
                data.push(if n > 0 { sum / n as f64 } else { 0.0 });
            }
        }
        Self { width: w, height: h, data }
    }
}

/// Source index range covered by target index `i` when mapping `dst` cells onto `src`.
pub(crate) fn footprint(i: usize, dst: usize, src: usize) -> (usize, usize) {
    let a = (i * src) / dst;
    let b = (((i + 1) * src) / dst).max(a + 1).min(src);
    (a, b)
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_vec(width, height, vec![0; width * height * 3])
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch(format!(
                "color buffer has {} bytes for {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Box-filter downsample to `w x h`.
    pub fn resize(&self, w: usize, h: usize) -> Self {
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            let (v0, v1) = footprint(y, h, self.height);
            for x in 0..w {
                let (u0, u1) = footprint(x, w, self.width);
                let mut acc = [0u32; 3];
                for v in v0..v1 {
                    for u in u0..u1 {
                        let px = self.get(u, v);
                        for c in 0..3 {
                            acc[c] += px[c] as u32;
                        }
                    }
                }
                let n = ((v1 - v0) * (u1 - u0)) as u32;
                for a in acc {
                    data.push(((a + n / 2) / n) as u8);
                }
            }
        }
        Self { width: w, height: h, data }
    }

    /// Per-channel planes as `f32` in `[0, 255]`.
    pub fn planes(&self) -> [Vec<f32>; 3] {
        let n = self.width * self.height;
        let mut out = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                out[c].push(px[c] as f32);
            }
        }
        out
    }
}
