//! Articulated upper-body figures: pose sampling and primitive layout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::render::{Owner, Prim, Shape};
use super::{Camera, SceneConfig};
use crate::frame::{joint, NUM_JOINTS};
use crate::geometry::Point3;

const UP: Point3 = Point3 { x: 0.0, y: 1.0, z: 0.0 };

pub const HEAD_RADIUS: f64 = 0.105;
pub const HAND_RADIUS: f64 = 0.05;

/// A posed figure in world coordinates (y up, floor at y = 0).
#[derive(Debug, Clone)]
pub struct Skeleton {
    /// The nine annotated joints; the head joint is the head sphere center.
    pub joints: [Point3; NUM_JOINTS],
    pub neck: Point3,
    pub hands: [Point3; 2],
    pub knees: [Point3; 2],
    pub ankles: [Point3; 2],
    pub ground: Point3,
}

#[derive(Debug, Clone, Copy)]
pub struct BodyColors {
    pub shirt: [f64; 3],
    pub skin: [f64; 3],
    pub pants: [f64; 3],
}

fn range(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Unit vector perpendicular to `d`, leaning towards `w`.
fn perpendicular(d: Point3, w: Point3) -> Point3 {
    let p = w.sub(d.scale(w.dot(d)));
    if p.norm() < 1e-9 {
        let alt = if d.x.abs() < 0.9 { Point3::new(1.0, 0.0, 0.0) } else { Point3::new(0.0, 0.0, 1.0) };
        return alt.sub(d.scale(alt.dot(d))).normalized();
    }
    p.normalized()
}

/// Samples a standing figure at `ground`, facing the camera turned by `yaw` radians.
pub fn sample_skeleton(cfg: &SceneConfig, ground: Point3, yaw: f64, rng: &mut ChaCha8Rng) -> Skeleton {
    // Facing direction and the figure's own left, in world coordinates.
    let fwd = Point3::new(yaw.sin(), 0.0, -yaw.cos());
    let left = Point3::new(yaw.cos(), 0.0, yaw.sin());
    let lean = range(rng, [-0.1, 0.25]);
    let side = range(rng, [-0.1, 0.1]);
    let up = UP.add(fwd.scale(lean.sin())).add(left.scale(side.sin())).normalized();

    let hip_height = range(rng, [0.86, 1.0]);
    let torso = range(rng, cfg.torso);
    let shoulder_half = range(rng, cfg.shoulder_half_width);
    let hip_half = range(rng, cfg.hip_half_width);
    let hip_mid = ground.add(UP.scale(hip_height));
    let neck = hip_mid.add(up.scale(torso));
    let head = neck.add(up.scale(range(rng, [0.2, 0.24]))).add(fwd.scale(0.02));

    let mut j = [Point3::default(); NUM_JOINTS];
    let mut hands = [Point3::default(); 2];
    j[joint::HEAD] = head;
    for (k, s) in [(0usize, 1.0), (1, -1.0)] {
        let lateral = left.scale(s);
        let shoulder = neck.add(lateral.scale(shoulder_half));
        let hip = hip_mid.add(lateral.scale(hip_half));
        let abd = range(rng, cfg.abduction_deg).to_radians();
        let flex = range(rng, cfg.flexion_deg).to_radians();
        let upper = up
            .scale(-abd.cos() * flex.cos())
            .add(lateral.scale(abd.sin() * flex.cos()))
            .add(fwd.scale(flex.sin()))
            .normalized();
        let elbow = shoulder.add(upper.scale(range(rng, cfg.upper_arm)));
        let bend = range(rng, cfg.elbow_deg).to_radians();
        let c = rng.random_range(0.0..std::f64::consts::TAU);
        let w = fwd.scale(c.cos()).add(up.scale(c.sin().abs())).add(lateral.scale(0.3 * c.sin()));
        let perp = perpendicular(upper, w);
        let fore = upper.scale(bend.cos()).add(perp.scale(bend.sin())).normalized();
        let wrist = elbow.add(fore.scale(range(rng, cfg.forearm)));
        hands[k] = wrist.add(fore.scale(0.04));
        let (js, je, jw, jh) = if k == 0 {
            (joint::L_SHOULDER, joint::L_ELBOW, joint::L_WRIST, joint::L_HIP)
        } else {
            (joint::R_SHOULDER, joint::R_ELBOW, joint::R_WRIST, joint::R_HIP)
        };
        j[js] = shoulder;
        j[je] = elbow;
        j[jw] = wrist;
        j[jh] = hip;
    }
    let mut knees = [Point3::default(); 2];
    let mut ankles = [Point3::default(); 2];
    for (k, hip) in [j[joint::L_HIP], j[joint::R_HIP]].into_iter().enumerate() {
        let foot = Point3::new(hip.x, 0.08, hip.z).add(fwd.scale(range(rng, [-0.1, 0.1])));
        knees[k] = hip.add(foot).scale(0.5).add(fwd.scale(0.04));
        ankles[k] = foot;
    }
    Skeleton { joints: j, neck, hands, knees, ankles, ground }
}

/// Primitives of one figure, already in camera coordinates.
pub fn person_prims(sk: &Skeleton, colors: &BodyColors, index: usize, cam: &Camera) -> Vec<Prim> {
    let t = |p: Point3| cam.to_camera(p);
    let upper = Owner::Person(index, true);
    let lower = Owner::Person(index, false);
    let cap = |a: Point3, b: Point3, r: f64, albedo: [f64; 3], owner: Owner| Prim {
        shape: Shape::Capsule { a: t(a), b: t(b), r },
        albedo,
        owner,
    };
    let sphere = |c: Point3, r: f64, albedo: [f64; 3], owner: Owner| Prim { shape: Shape::Sphere { c: t(c), r }, albedo, owner };
    let j = &sk.joints;
    let hip_mid = j[joint::L_HIP].add(j[joint::R_HIP]).scale(0.5);
    let mut out = vec![
        sphere(j[joint::HEAD], HEAD_RADIUS, colors.skin, upper),
        cap(sk.neck, j[joint::HEAD], 0.05, colors.skin, upper),
        cap(sk.neck, hip_mid, 0.12, colors.shirt, upper),
        cap(j[joint::L_SHOULDER], j[joint::R_SHOULDER], 0.075, colors.shirt, upper),
        cap(j[joint::L_SHOULDER], j[joint::L_HIP], 0.09, colors.shirt, upper),
        cap(j[joint::R_SHOULDER], j[joint::R_HIP], 0.09, colors.shirt, upper),
        cap(j[joint::L_HIP], j[joint::R_HIP], 0.09, colors.pants, upper),
    ];
    for (s, e, w, h) in [
        (joint::L_SHOULDER, joint::L_ELBOW, joint::L_WRIST, 0),
        (joint::R_SHOULDER, joint::R_ELBOW, joint::R_WRIST, 1),
    ] {
        out.push(cap(j[s], j[e], 0.05, colors.shirt, upper));
        out.push(cap(j[e], j[w], 0.042, colors.skin, upper));
        out.push(sphere(sk.hands[h], HAND_RADIUS, colors.skin, upper));
    }
    for k in 0..2 {
        let hip = if k == 0 { j[joint::L_HIP] } else { j[joint::R_HIP] };
        out.push(cap(hip, sk.knees[k], 0.075, colors.pants, lower));
        out.push(cap(sk.knees[k], sk.ankles[k], 0.06, colors.pants, lower));
    }
    out
}
