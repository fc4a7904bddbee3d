//! Pairwise deformation features.
//!
//! Displacements are always child minus parent: pixel terms in cells of the
//! pyramid level the pose lives on, metric terms in meters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Psi2d,
    Psi3d1,
    Psi3d2,
    Psi3d3,
    Psi3d4,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Psi2d, Variant::Psi3d1, Variant::Psi3d2, Variant::Psi3d3, Variant::Psi3d4];

    pub fn dims(self) -> usize {
        match self {
            Variant::Psi2d => 4,
            Variant::Psi3d1 => 6,
            Variant::Psi3d2 => 7,
            Variant::Psi3d3 => 4,
            Variant::Psi3d4 => 5,
        }
    }

    pub fn is_3d(self) -> bool {
        self != Variant::Psi2d
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Psi2d => "psi2d",
            Variant::Psi3d1 => "psi3d1",
            Variant::Psi3d2 => "psi3d2",
            Variant::Psi3d3 => "psi3d3",
            Variant::Psi3d4 => "psi3d4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Indices of the components that are squares of a displacement.
    pub fn squared_terms(self) -> &'static [usize] {
        match self {
            Variant::Psi2d => &[1, 3],
            Variant::Psi3d1 => &[1, 3, 5],
            Variant::Psi3d2 => &[2, 4, 6],
            Variant::Psi3d3 => &[],
            Variant::Psi3d4 => &[2, 4],
        }
    }

    /// Index of the distance-magnitude component, if any.
    pub fn distance_term(self) -> Option<usize> {
        match self {
            Variant::Psi3d2 | Variant::Psi3d3 | Variant::Psi3d4 => Some(0),
            _ => None,
        }
    }

    /// Components measured in meters (the rest are in cells or are squares of cells).
    pub fn metric_terms(self) -> &'static [usize] {
        match self {
            Variant::Psi2d => &[],
            Variant::Psi3d1 => &[0, 1, 2, 3, 4, 5],
            Variant::Psi3d2 => &[0, 1, 2, 3, 4, 5, 6],
            Variant::Psi3d3 => &[0, 1, 2, 3],
            Variant::Psi3d4 => &[0],
        }
    }
}

/// How the leading term of the combined 2D/3D feature is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceReading {
    /// `| ||d|| - a |`, same as the other distance-based variants.
    #[default]
    AnchorRelative,
    /// `||d||`.
    Absolute,
}

/// Mean offsets of a child part from its parent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Anchor {
    /// `(ac, ar)` in cells.
    pub pix: [f64; 2],
    /// `(ax, ay, az)` in meters.
    pub xyz: [f64; 3],
    /// Mean Euclidean distance in meters.
    pub dist: f64,
}

/// Placement of a part: grid cell on its level and, when depth is valid, its 3D point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub col: f64,
    pub row: f64,
    pub point: Option<Point3>,
}

impl Placement {
    pub fn new(col: f64, row: f64, point: Option<Point3>) -> Self {
        Self { col, row, point }
    }
}

pub fn psi_2d(dc: f64, dr: f64, anchor: &Anchor) -> [f64; 4] {
    let (c, r) = (dc - anchor.pix[0], dr - anchor.pix[1]);
    [c, c * c, r, r * r]
}

pub fn psi_3d_1(d: Point3, anchor: &Anchor) -> [f64; 6] {
    let (x, y, z) = (d.x - anchor.xyz[0], d.y - anchor.xyz[1], d.z - anchor.xyz[2]);
    [x, x * x, y, y * y, z, z * z]
}

pub fn psi_3d_2(d: Point3, anchor: &Anchor) -> [f64; 7] {
    let [x, xx, y, yy, z, zz] = psi_3d_1(d, anchor);
    [(d.norm() - anchor.dist).abs(), x, xx, y, yy, z, zz]
}

pub fn psi_3d_3(d: Point3, anchor: &Anchor) -> [f64; 4] {
    [(d.norm() - anchor.dist).abs(), d.x - anchor.xyz[0], d.y - anchor.xyz[1], d.z - anchor.xyz[2]]
}

pub fn psi_3d_4(d: Point3, dc: f64, dr: f64, anchor: &Anchor, reading: DistanceReading) -> [f64; 5] {
    let lead = match reading {
        DistanceReading::AnchorRelative => (d.norm() - anchor.dist).abs(),
        DistanceReading::Absolute => d.norm(),
    };
    let [c, cc, r, rr] = psi_2d(dc, dr, anchor);
    [lead, c, cc, r, rr]
}

/// Writes the feature of `variant` for a child/parent pair into `out`.
pub fn psi_into(
    variant: Variant,
    reading: DistanceReading,
    child: &Placement,
    parent: &Placement,
    anchor: &Anchor,
    out: &mut [f64],
) -> Result<()> {
    let (dc, dr) = (child.col - parent.col, child.row - parent.row);
    if variant == Variant::Psi2d {
        out.copy_from_slice(&psi_2d(dc, dr, anchor));
        return Ok(());
    }
    let (pc, pp) = match (child.point, parent.point) {
        (Some(a), Some(b)) => (a, b),
        (None, _) => return Err(Error::InvalidDepth { u: child.col, v: child.row }),
        (_, None) => return Err(Error::InvalidDepth { u: parent.col, v: parent.row }),
    };
    let d = pc.sub(pp);
    match variant {
        Variant::Psi2d => unreachable!(),
        Variant::Psi3d1 => out.copy_from_slice(&psi_3d_1(d, anchor)),
        Variant::Psi3d2 => out.copy_from_slice(&psi_3d_2(d, anchor)),
        Variant::Psi3d3 => out.copy_from_slice(&psi_3d_3(d, anchor)),
        Variant::Psi3d4 => out.copy_from_slice(&psi_3d_4(d, dc, dr, anchor, reading)),
    }
    Ok(())
}

pub fn psi(
    variant: Variant,
    reading: DistanceReading,
    child: &Placement,
    parent: &Placement,
    anchor: &Anchor,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; variant.dims()];
    psi_into(variant, reading, child, parent, anchor, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn anchor(pix: [f64; 2], xyz: [f64; 3], dist: f64) -> Anchor {
        Anchor { pix, xyz, dist }
    }

    #[test]
    fn two_d_fixtures() {
        let a = anchor([1.0, 2.0], [0.0; 3], 0.0);
        assert_eq!(psi_2d(1.0, 2.0, &a), [0.0; 4]);
        assert_eq!(psi_2d(3.0, 1.0, &a), [2.0, 4.0, -1.0, 1.0]);
        assert_eq!(psi_2d(0.0, 0.0, &Anchor::default()), [0.0; 4]);
    }

    #[test]
    fn three_d_fixtures() {
        let a = anchor([0.0; 2], [0.1, 0.2, 0.3], 0.0);
        assert_eq!(psi_3d_1(Point3::new(0.1, 0.2, 0.3), &a), [0.0; 6]);
        let v = psi_3d_1(Point3::new(0.1, 0.0, -0.2), &Anchor::default());
        let want = [0.1, 0.01, 0.0, 0.0, -0.2, 0.04];
        for (g, w) in v.iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        let b = anchor([0.0; 2], [0.0; 3], 0.3);
        let lead = psi_3d_2(Point3::new(0.3, 0.4, 0.0).scale(1.0), &b)[0];
        assert!((lead - 0.2).abs() < 1e-12);
        assert!((psi_3d_3(Point3::new(0.0, 0.0, 0.5), &b)[0] - 0.2).abs() < 1e-12);
        let c = anchor([0.0; 2], [0.0; 3], 0.5);
        assert_eq!(psi_3d_2(Point3::new(0.0, 0.0, 0.5), &anchor([0.0; 2], [0.0, 0.0, 0.5], 0.5)), [0.0; 7]);
        assert_eq!(psi_3d_3(Point3::new(0.0, 0.3, 0.4), &c)[0], 0.0);
    }

    #[test]
    fn combined_fixtures() {
        let d = Point3::new(0.0, 0.4, 0.0);
        assert_eq!(psi_3d_4(d, 3.0, 0.0, &Anchor::default(), DistanceReading::Absolute), [0.4, 3.0, 9.0, 0.0, 0.0]);
        assert_eq!(psi_3d_4(Point3::default(), 0.0, 0.0, &Anchor::default(), DistanceReading::Absolute), [0.0; 5]);
        let a = anchor([2.0, -1.0], [0.0; 3], 0.4);
        let v = psi_3d_4(d, 2.0, -1.0, &a, DistanceReading::AnchorRelative);
        assert_eq!(&v[1..], &[0.0; 4]);
        assert!(v[0].abs() < 1e-15);
    }

    #[test]
    fn three_d_needs_depth() {
        let p = Placement::new(0.0, 0.0, None);
        let q = Placement::new(1.0, 0.0, Some(Point3::new(0.0, 0.0, 1.0)));
        assert!(psi(Variant::Psi2d, DistanceReading::default(), &p, &q, &Anchor::default()).is_ok());
        assert!(matches!(
            psi(Variant::Psi3d1, DistanceReading::default(), &p, &q, &Anchor::default()),
            Err(Error::InvalidDepth { .. })
        ));
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
            assert_eq!(Variant::from_code(v.code()), Some(v));
        }
    }

    proptest! {
        #[test]
        fn mirrored_displacement_flips_odd_terms(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64) {
            let a = anchor([0.0; 2], [0.05, -0.02, 0.1], 0.0);
            let d = Point3::new(a.xyz[0] + x, a.xyz[1] + y, a.xyz[2] + z);
            let m = Point3::new(a.xyz[0] - x, a.xyz[1] - y, a.xyz[2] - z);
            let (p, q) = (psi_3d_1(d, &a), psi_3d_1(m, &a));
            for k in 0..6 {
                let want = if k % 2 == 0 { -p[k] } else { p[k] };
                prop_assert!((q[k] - want).abs() < 1e-12);
            }
        }

        #[test]
        fn distance_term_is_rotation_invariant(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, t in 0.0..6.3f64) {
            let a = anchor([0.0; 2], [0.0; 3], 0.35);
            let d = Point3::new(x, y, z);
            let r = Point3::new(x * t.cos() - y * t.sin(), x * t.sin() + y * t.cos(), z);
            prop_assert!((psi_3d_2(d, &a)[0] - psi_3d_2(r, &a)[0]).abs() < 1e-12);
        }
    }
}
