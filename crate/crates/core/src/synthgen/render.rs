//! Ray casting of spheres, capsules and planes in camera coordinates.

use crate::geometry::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { c: Point3, r: f64 },
    Capsule { a: Point3, b: Point3, r: f64 },
    /// Points with `n . p + d = 0`.
    Plane { n: Point3, d: f64 },
}

/// What a primitive belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Background,
    Clutter,
    /// Person index and whether the primitive is part of the upper body.
    Person(usize, bool),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prim {
    pub shape: Shape,
    pub albedo: [f64; 3],
    pub owner: Owner,
}

/// Depth (camera z) of the nearest intersection of the ray `t * dir`, where
/// `dir = (x, y, 1)`, so the ray parameter is the depth itself.
pub fn intersect(shape: &Shape, dir: Point3) -> Option<f64> {
    match *shape {
        Shape::Sphere { c, r } => {
            let a = dir.dot(dir);
            let b = dir.dot(c);
            let h = b * b - a * (c.dot(c) - r * r);
            if h < 0.0 {
                return None;
            }
            let t = (b - h.sqrt()) / a;
            (t > 0.0).then_some(t)
        }
        Shape::Capsule { a, b, r } => {
            let len = dir.norm();
            let rd = dir.scale(1.0 / len);
            capsule_hit(rd, a, b, r).map(|t| t / len)
        }
        Shape::Plane { n, d } => {
            let den = n.dot(dir);
            if den.abs() < 1e-12 {
                return None;
            }
            let t = -d / den;
            (t > 0.0).then_some(t)
        }
    }
}

/// Distance along the unit ray `rd` from the origin to a capsule.
fn capsule_hit(rd: Point3, pa: Point3, pb: Point3, r: f64) -> Option<f64> {
    let ba = pb.sub(pa);
    let oa = pa.scale(-1.0);
    let baba = ba.dot(ba);
    let bard = ba.dot(rd);
    let baoa = ba.dot(oa);
    let rdoa = rd.dot(oa);
    let oaoa = oa.dot(oa);
    let a = baba - bard * bard;
    let b = baba * rdoa - baoa * bard;
    let c = baba * oaoa - baoa * baoa - r * r * baba;
    let h = b * b - a * c;
    if h < 0.0 {
        return None;
    }
    if a > 1e-12 {
        let t = (-b - h.sqrt()) / a;
        let y = baoa + t * bard;
        if y > 0.0 && y < baba {
            return (t > 0.0).then_some(t);
        }
    }
    let mut best: Option<f64> = None;
    for end in [pa, pb] {
        let oc = end.scale(-1.0);
        let b = rd.dot(oc);
        let h = b * b - (oc.dot(oc) - r * r);
        if h >= 0.0 {
            let t = -b - h.sqrt();
            if t > 0.0 && best.is_none_or(|s| t < s) {
                best = Some(t);
            }
        }
    }
    best
}

/// Outward unit normal at a surface point.
pub fn normal(shape: &Shape, p: Point3) -> Point3 {
    match *shape {
        Shape::Sphere { c, .. } => p.sub(c).normalized(),
        Shape::Capsule { a, b, .. } => {
            let ab = b.sub(a);
            let t = (p.sub(a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            p.sub(a.add(ab.scale(t))).normalized()
        }
        Shape::Plane { n, .. } => n,
    }
}

/// Nearest primitive along `dir` as `(depth, index)`; ties go to the lower index.
pub fn cast<'a>(prims: impl IntoIterator<Item = (usize, &'a Prim)>, dir: Point3) -> Option<(f64, usize)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in prims {
        if let Some(t) = intersect(&p.shape, dir) {
            if best.is_none_or(|(s, _)| t < s) {
                best = Some((t, i));
            }
        }
    }
    best
}
