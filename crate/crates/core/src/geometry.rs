//! Pinhole camera model and depth reprojection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::DepthImage;

/// Pinhole intrinsics. Pixel `(u, v)` denotes the pixel *center*, so the
/// principal point of a `w x h` sensor is usually `((w-1)/2, (h-1)/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Lateral meters per pixel per meter of depth. For non-square pixels
    /// this is `1 / min(fx, fy)`, the conservative choice for window sizing.
    pub res: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::ConfigInvalid(format!("focal lengths must be positive, got {fx}, {fy}")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::ConfigInvalid("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy, res: 1.0 / fx.min(fy) })
    }

    /// Square-pixel camera centered on a `width x height` sensor.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(focal, focal, (width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
    }

    pub fn is_square(&self) -> bool {
        self.fx == self.fy
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.fx, self.fy, self.cx, self.cy)?;
        if !(self.res > 0.0) || (self.is_square() && (self.res - 1.0 / self.fx).abs() > 1e-9) {
            return Err(Error::ConfigInvalid(format!(
                "res {} inconsistent with focal length (expected {})",
                self.res, fresh.res
            )));
        }
        Ok(())
    }

    /// Back-projects pixel `(u, v)` at depth `z` (meters along the optical axis).
    pub fn reproject(&self, u: f64, v: f64, z: f64) -> Result<Point3> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidDepth { u, v });
        }
        Ok(Point3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z))
    }

    /// Projects a camera-frame point to pixel coordinates.
    pub fn project(&self, p: Point3) -> (f64, f64) {
        (self.cx + self.fx * p.x / p.z, self.cy + self.fy * p.y / p.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn scale(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Point3 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            self
        }
    }

    pub fn distance(self, o: Point3) -> f64 {
        self.sub(o).norm()
    }
}

/// Euclidean distance between the 3D points behind two depth pixels.
pub fn distance3d(
    a: (usize, usize),
    b: (usize, usize),
    depth: &DepthImage,
    intr: &CameraIntrinsics,
) -> Result<f64> {
    let pa = depth.point_at(a.0, a.1, intr)?;
    let pb = depth.point_at(b.0, b.1, intr)?;
    Ok(pa.distance(pb))
}
