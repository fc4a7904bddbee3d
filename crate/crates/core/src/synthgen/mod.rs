//! Deterministic synthetic RGB-D scenes with annotated upper-body poses.
//!
//! Figures built from spheres and capsules stand on a floor in front of a
//! wall, seen by a camera mounted above head height and pitched down. Frames
//! come with exact joint pixels, surface 3D joints, tight upper-body boxes and
//! difficult flags. A frame depends only on the config and its seed.

mod dataset;
mod person;
mod render;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BBox, Joint, PersonAnnotation, RgbdFrame, NUM_JOINTS};
use crate::geometry::{CameraIntrinsics, Point3};
use crate::image::{ColorImage, DepthImage};

pub use dataset::{generate_dataset, DatasetConfig};
pub use person::{sample_skeleton, BodyColors, Skeleton};
pub use render::{cast, intersect, Owner, Prim, Shape};

/// Scene parameters. Lengths in meters, angles in degrees, `[min, max]` pairs are sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub camera_height: f64,
    pub pitch_deg: f64,
    /// Number of figures per frame.
    pub persons: [usize; 2],
    /// Horizontal distance of a figure from the camera.
    pub distance: [f64; 2],
    pub yaw_deg: f64,
    /// Minimum distance between two figures' floor positions.
    pub min_separation: f64,
    /// Chance that a further figure stands behind an earlier one, overlapping it in the image.
    pub overlap_probability: f64,
    pub torso: [f64; 2],
    pub shoulder_half_width: [f64; 2],
    pub hip_half_width: [f64; 2],
    pub upper_arm: [f64; 2],
    pub forearm: [f64; 2],
    /// Upper arm away from the body: 0 hangs down, 90 is horizontal.
    pub abduction_deg: [f64; 2],
    /// Upper arm swung forward.
    pub flexion_deg: [f64; 2],
    pub elbow_deg: [f64; 2],
    /// Free-standing poles, bars and lamps per frame.
    pub clutter: [usize; 2],
    /// Limb-like bars placed behind each figure.
    pub distractors: [usize; 2],
    /// How far behind a figure its distractors stand.
    pub distractor_depth: [f64; 2],
    /// 0 keeps clothing colors, 1 makes them equal to the wall.
    pub color_similarity: f64,
    /// Strength of Lambert shading on top of flat albedo.
    pub shading: f64,
    pub color_noise: f64,
    pub depth_noise: f64,
    pub depth_step: f64,
    pub hole_fraction: f64,
    pub wall_distance: f64,
    pub max_range: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            focal: 280.0,
            camera_height: 2.6,
            pitch_deg: 30.0,
            persons: [1, 3],
            distance: [1.8, 2.8],
            yaw_deg: 30.0,
            min_separation: 0.9,
            overlap_probability: 0.6,
            torso: [0.46, 0.54],
            shoulder_half_width: [0.16, 0.2],
            hip_half_width: [0.1, 0.13],
            upper_arm: [0.26, 0.32],
            forearm: [0.22, 0.27],
            abduction_deg: [10.0, 110.0],
            flexion_deg: [-20.0, 60.0],
            elbow_deg: [0.0, 120.0],
            clutter: [2, 5],
            distractors: [1, 2],
            distractor_depth: [0.6, 1.4],
            color_similarity: 0.6,
            shading: 0.3,
            color_noise: 4.0,
            depth_noise: 0.01,
            depth_step: 0.001,
            hole_fraction: 0.002,
            wall_distance: 6.5,
            max_range: 8.0,
        }
    }
}

impl SceneConfig {
    /// No depth noise, holes or color noise; depth still quantized.
    pub fn noiseless(mut self) -> Self {
        self.depth_noise = 0.0;
        self.hole_fraction = 0.0;
        self.color_noise = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if self.width < 32 || self.height < 32 {
            return bad(format!("scene must be at least 32x32, got {}x{}", self.width, self.height));
        }
        if !(self.focal > 0.0 && self.camera_height > 0.0) {
            return bad("focal length and camera height must be positive".into());
        }
        if !(0.0..90.0).contains(&self.pitch_deg) {
            return bad(format!("pitch must be in [0, 90) degrees, got {}", self.pitch_deg));
        }
        if self.persons[0] > self.persons[1] || self.persons[1] > 8 {
            return bad(format!("persons range {:?} must be ordered and at most 8", self.persons));
        }
        for (name, r) in [("torso", self.torso), ("shoulder_half_width", self.shoulder_half_width), ("hip_half_width", self.hip_half_width), ("upper_arm", self.upper_arm), ("forearm", self.forearm)] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1] < 0.9) {
                return bad(format!("{name} range {r:?} must be ordered, positive and below 0.9 m"));
            }
        }
        for (name, r) in [("distance", self.distance), ("abduction_deg", self.abduction_deg), ("flexion_deg", self.flexion_deg), ("elbow_deg", self.elbow_deg), ("distractor_depth", self.distractor_depth)] {
            if !(r[0] <= r[1]) {
                return bad(format!("{name} range {r:?} is not ordered"));
            }
        }
        if !(self.distance[0] > 0.5) {
            return bad("figures must stand more than 0.5 m from the camera".into());
        }
        if self.clutter[0] > self.clutter[1] || self.distractors[0] > self.distractors[1] {
            return bad("clutter and distractor ranges must be ordered".into());
        }
        for (name, v) in [("color_similarity", self.color_similarity), ("shading", self.shading), ("overlap_probability", self.overlap_probability), ("hole_fraction", self.hole_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.depth_noise >= 0.0 && self.color_noise >= 0.0 && self.depth_step > 0.0) {
            return bad("noise levels must be >= 0 and the depth step positive".into());
        }
        if !(self.wall_distance > self.distance[1] && self.max_range > 0.0) {
            return bad("the wall must stand behind every figure".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::centered(self.focal, self.width, self.height)
    }
}

/// Camera at `(0, height, 0)` looking along +z, pitched down.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    origin: Point3,
    axes: [Point3; 3],
}

impl Camera {
    pub fn new(cfg: &SceneConfig) -> Result<Self> {
        let (s, c) = cfg.pitch_deg.to_radians().sin_cos();
        Ok(Self {
            intrinsics: cfg.intrinsics()?,
            origin: Point3::new(0.0, cfg.camera_height, 0.0),
            axes: [Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, -c, -s), Point3::new(0.0, -s, c)],
        })
    }

    pub fn to_camera(&self, p: Point3) -> Point3 {
        let d = p.sub(self.origin);
        Point3::new(d.dot(self.axes[0]), d.dot(self.axes[1]), d.dot(self.axes[2]))
    }

    pub fn to_world(&self, p: Point3) -> Point3 {
        self.origin.add(self.axes[0].scale(p.x)).add(self.axes[1].scale(p.y)).add(self.axes[2].scale(p.z))
    }

    /// World plane `n . p + d = 0` in camera coordinates.
    fn plane(&self, n: Point3, d: f64) -> Shape {
        let nc = Point3::new(n.dot(self.axes[0]), n.dot(self.axes[1]), n.dot(self.axes[2]));
        Shape::Plane { n: nc, d: n.dot(self.origin) + d }
    }

    pub fn pixel(&self, p_world: Point3) -> (f64, f64) {
        self.intrinsics.project(self.to_camera(p_world))
    }
}

const WALL_COLORS: [[f64; 3]; 4] = [[0.62, 0.66, 0.70], [0.55, 0.62, 0.58], [0.68, 0.64, 0.58], [0.58, 0.60, 0.66]];
const FLOOR_COLORS: [[f64; 3]; 3] = [[0.45, 0.47, 0.50], [0.50, 0.46, 0.42], [0.40, 0.45, 0.44]];
const SHIRT_COLORS: [[f64; 3]; 5] = [[0.25, 0.45, 0.55], [0.30, 0.55, 0.40], [0.75, 0.78, 0.80], [0.20, 0.30, 0.60], [0.55, 0.35, 0.50]];
const SKIN_COLORS: [[f64; 3]; 3] = [[0.85, 0.68, 0.58], [0.65, 0.48, 0.38], [0.45, 0.32, 0.25]];
const PANTS_COLORS: [[f64; 3]; 3] = [[0.20, 0.22, 0.28], [0.35, 0.38, 0.45], [0.25, 0.45, 0.55]];

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn pick<const N: usize>(rng: &mut ChaCha8Rng, palette: &[[f64; 3]; N]) -> [f64; 3] {
    palette[rng.random_range(0..N)]
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn count(rng: &mut ChaCha8Rng, r: [usize; 2]) -> usize {
    rng.random_range(r[0]..=r[1])
}

/// Whether every joint projects inside the image with a small margin.
fn joints_in_view(cam: &Camera, cfg: &SceneConfig, sk: &Skeleton) -> bool {
    let m = 3.0;
    sk.joints.iter().chain(&sk.hands).all(|&p| {
        let c = cam.to_camera(p);
        let (u, v) = cam.intrinsics.project(c);
        c.z > 0.3 && u >= m && v >= m && u <= cfg.width as f64 - 1.0 - m && v <= cfg.height as f64 - 1.0 - m
    })
}

/// A point on the floor at horizontal distance `dist`, at lateral fraction `t` of the visible width.
fn floor_point(cfg: &SceneConfig, dist: f64, t: f64) -> Point3 {
    let half = (cfg.width as f64 / 2.0) / cfg.focal;
    Point3::new(t * half * dist, 0.0, dist)
}

fn place_figures(cfg: &SceneConfig, cam: &Camera, rng: &mut ChaCha8Rng) -> Vec<Skeleton> {
    let n = count(rng, cfg.persons);
    let mut out: Vec<Skeleton> = Vec::new();
    for _ in 0..n {
        for _attempt in 0..200 {
            let ground = if !out.is_empty() && rng.random_bool(cfg.overlap_probability) {
                let anchor = out[rng.random_range(0..out.len())].ground;
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let back = uniform(rng, [cfg.min_separation, cfg.min_separation + 1.0]);
                Point3::new(anchor.x + side * uniform(rng, [0.25, 0.7]), 0.0, anchor.z + back)
            } else {
                let dist = uniform(rng, cfg.distance);
                floor_point(cfg, dist, rng.random_range(-0.8..0.8))
            };
            if out.iter().any(|s| s.ground.distance(ground) < cfg.min_separation) {
                continue;
            }
            if ground.z >= cfg.wall_distance - 0.4 {
                continue;
            }
            let yaw = uniform(rng, [-cfg.yaw_deg, cfg.yaw_deg]).to_radians();
            let sk = sample_skeleton(cfg, ground, yaw, rng);
            if joints_in_view(cam, cfg, &sk) {
                out.push(sk);
                break;
            }
        }
    }
    out
}

fn clear_of(figures: &[Skeleton], a: Point3, b: Point3, gap: f64) -> bool {
    figures.iter().all(|s| {
        s.joints.iter().chain(&s.hands).chain([&s.neck]).all(|&p| {
            let ab = b.sub(a);
            let t = (p.sub(a).dot(ab) / ab.dot(ab).max(1e-12)).clamp(0.0, 1.0);
            p.distance(a.add(ab.scale(t))) > gap
        })
    })
}

/// A limb-like bar ending in a hand-sized ball, around `center`.
fn limb_distractor(rng: &mut ChaCha8Rng, cam: &Camera, center: Point3, colors: [[f64; 3]; 2]) -> [Prim; 3] {
    let ang = rng.random_range(0.0..std::f64::consts::TAU);
    let dir = Point3::new(ang.cos(), ang.sin(), rng.random_range(-0.3..0.3)).normalized();
    let half = uniform(rng, [0.14, 0.26]);
    let (a, b) = (center.sub(dir.scale(half)), center.add(dir.scale(half)));
    let joint = b.add(dir.scale(uniform(rng, [0.2, 0.3])).add(Point3::new(0.0, -0.1, 0.0)));
    let c = |p| cam.to_camera(p);
    [
        Prim { shape: Shape::Capsule { a: c(a), b: c(b), r: 0.05 }, albedo: colors[0], owner: Owner::Clutter },
        Prim { shape: Shape::Capsule { a: c(b), b: c(joint), r: 0.042 }, albedo: colors[1], owner: Owner::Clutter },
        Prim { shape: Shape::Sphere { c: c(joint), r: 0.05 }, albedo: colors[1], owner: Owner::Clutter },
    ]
}

fn clutter_prims(cfg: &SceneConfig, cam: &Camera, figures: &[Skeleton], rng: &mut ChaCha8Rng) -> Vec<Prim> {
    let mut out = Vec::new();
    let color = |rng: &mut ChaCha8Rng| {
        let base = if rng.random_bool(0.5) { pick(rng, &SHIRT_COLORS) } else { pick(rng, &SKIN_COLORS) };
        lerp(base, WALL_COLORS[0], cfg.color_similarity * 0.5)
    };
    for _ in 0..count(rng, cfg.clutter) {
        let dist = uniform(rng, [cfg.distance[0], cfg.wall_distance - 0.3]);
        let base = floor_point(cfg, dist, rng.random_range(-1.0..1.0));
        let top = base.add(Point3::new(0.0, uniform(rng, [1.0, 1.9]), 0.0));
        if !clear_of(figures, base, top, 0.3) {
            continue;
        }
        let albedo = color(rng);
        let c = |p| cam.to_camera(p);
        out.push(Prim { shape: Shape::Capsule { a: c(base), b: c(top), r: uniform(rng, [0.025, 0.05]) }, albedo, owner: Owner::Clutter });
        match rng.random_range(0..3) {
            0 => out.push(Prim { shape: Shape::Sphere { c: c(top), r: uniform(rng, [0.08, 0.12]) }, albedo: color(rng), owner: Owner::Clutter }),
            1 => {
                let center = top.sub(Point3::new(0.0, uniform(rng, [0.2, 0.6]), 0.0));
                let colors = [color(rng), color(rng)];
                out.extend(limb_distractor(rng, cam, center, colors));
            }
            _ => {}
        }
    }
    // Limb-like bars just behind figures: close in the image, far in depth.
    let mut anchors: Vec<(Point3, [[f64; 3]; 2])> = Vec::new();
    for s in figures {
        for _ in 0..count(rng, cfg.distractors) {
            anchors.push((s.neck, [color(rng), color(rng)]));
        }
    }
    if figures.is_empty() {
        for _ in 0..count(rng, cfg.distractors) * 2 {
            let p = floor_point(cfg, uniform(rng, cfg.distance), rng.random_range(-0.8..0.8)).add(Point3::new(0.0, 1.4, 0.0));
            anchors.push((p, [color(rng), color(rng)]));
        }
    }
    for (neck, colors) in anchors {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let center = neck.add(Point3::new(
            side * uniform(rng, [0.25, 0.6]),
            -uniform(rng, [0.0, 0.5]),
            uniform(rng, cfg.distractor_depth),
        ));
        let prims = limb_distractor(rng, cam, center, colors);
        let ends = |p: &Prim| match p.shape {
            Shape::Capsule { a, b, .. } => (cam.to_world(a), cam.to_world(b)),
            _ => (Point3::default(), Point3::default()),
        };
        let (a, _) = ends(&prims[0]);
        let (_, b) = ends(&prims[1]);
        if clear_of(figures, a, b, 0.3) && a.z < cfg.wall_distance - 0.1 && b.z < cfg.wall_distance - 0.1 {
            out.extend(prims);
        }
    }
    out
}

/// Renders one frame. Figures, clutter and noise all derive from `seed`.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<RgbdFrame> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cam = Camera::new(cfg)?;
    let intr = cam.intrinsics;
    let wall = pick(&mut rng, &WALL_COLORS);
    let floor = pick(&mut rng, &FLOOR_COLORS);

    let figures = place_figures(cfg, &cam, &mut rng);
    let mut prims = vec![
        Prim { shape: cam.plane(Point3::new(0.0, 1.0, 0.0), 0.0), albedo: floor, owner: Owner::Background },
        Prim { shape: cam.plane(Point3::new(0.0, 0.0, -1.0), cfg.wall_distance), albedo: wall, owner: Owner::Background },
    ];
    for (i, s) in figures.iter().enumerate() {
        let c = BodyColors {
            shirt: lerp(pick(&mut rng, &SHIRT_COLORS), wall, cfg.color_similarity),
            skin: lerp(pick(&mut rng, &SKIN_COLORS), wall, cfg.color_similarity * 0.5),
            pants: lerp(pick(&mut rng, &PANTS_COLORS), floor, cfg.color_similarity),
        };
        prims.extend(person::person_prims(s, &c, i, &cam));
    }
    prims.extend(clutter_prims(cfg, &cam, &figures, &mut rng));

    let (w, h) = (cfg.width, cfg.height);
    let n_fig = figures.len();
    let mut depth = vec![0.0; w * h];
    let mut color = vec![0u8; 3 * w * h];
    let mut owner = vec![Owner::Background; w * h];
    let mut hit_any = vec![false; w * h];
    // Per pixel, which figures' upper bodies the ray meets regardless of occlusion.
    let mut silhouette = vec![0u8; w * h];
    let depth_noise = Normal::new(0.0, cfg.depth_noise).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let color_noise = Normal::new(0.0, cfg.color_noise).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let dir = Point3::new((u as f64 - intr.cx) / intr.fx, (v as f64 - intr.cy) / intr.fy, 1.0);
            let mut best: Option<(f64, usize)> = None;
            for (k, p) in prims.iter().enumerate() {
                let Some(t) = intersect(&p.shape, dir) else { continue };
                if let Owner::Person(f, true) = p.owner {
                    silhouette[i] |= 1 << f;
                }
                if best.is_none_or(|(s, _)| t < s) {
                    best = Some((t, k));
                }
            }
            let mut rgb = [0.12, 0.12, 0.12];
            if let Some((t, k)) = best.filter(|&(t, _)| t <= cfg.max_range) {
                let p = &prims[k];
                let hit = dir.scale(t);
                let lambert = (-render::normal(&p.shape, hit).dot(dir.normalized())).max(0.0);
                let mut albedo = p.albedo;
                if k == 0 {
                    let wp = cam.to_world(hit);
                    let tile = ((wp.x / 0.6).floor() + (wp.z / 0.6).floor()).rem_euclid(2.0);
                    albedo = albedo.map(|a| a * (0.94 + 0.12 * tile));
                }
                rgb = albedo.map(|a| a * (1.0 - cfg.shading + cfg.shading * lambert));
                owner[i] = p.owner;
                hit_any[i] = true;
                let noisy = if cfg.depth_noise > 0.0 { t + depth_noise.sample(&mut rng) } else { t };
                // Snapped to whole millimeters.
                let q = ((noisy / cfg.depth_step).round() * cfg.depth_step * 1000.0).round() / 1000.0;
                let dropped = cfg.hole_fraction > 0.0 && rng.random_bool(cfg.hole_fraction);
                depth[i] = if q > 0.0 && !dropped { q.min(65.535) } else { 0.0 };
            }
            for (c, value) in rgb.iter().enumerate() {
                let noise = if cfg.color_noise > 0.0 { color_noise.sample(&mut rng) } else { 0.0 };
                color[3 * i + c] = (value * 255.0 + noise).round().clamp(0.0, 255.0) as u8;
            }
        }
    }

    let mut annotations = Vec::with_capacity(n_fig);
    for (f, sk) in figures.iter().enumerate() {
        let own: Vec<(usize, &Prim)> = prims.iter().enumerate().filter(|(_, p)| matches!(p.owner, Owner::Person(g, _) if g == f)).collect();
        let mut joints = [Joint { u: 0.0, v: 0.0, visible: false }; NUM_JOINTS];
        let mut joints3d = [Point3::default(); NUM_JOINTS];
        for (j, &p) in sk.joints.iter().enumerate() {
            let (pu, pv) = cam.pixel(p);
            let (u, v) = (pu.round(), pv.round());
            let i = v as usize * w + u as usize;
            let dir = Point3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
            joints3d[j] = match cast(own.iter().copied(), dir) {
                Some((t, _)) => dir.scale(t),
                None => cam.to_camera(p),
            };
            let visible = matches!(owner[i], Owner::Person(g, _) if g == f) && hit_any[i];
            joints[j] = Joint { u, v, visible };
        }
        let bit = 1u8 << f;
        let (mut total, mut seen) = (0usize, 0usize);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for v in 0..h {
            for u in 0..w {
                let i = v * w + u;
                if silhouette[i] & bit == 0 {
                    continue;
                }
                total += 1;
                if owner[i] == Owner::Person(f, true) {
                    seen += 1;
                }
                (x0, y0, x1, y1) = (x0.min(u), y0.min(v), x1.max(u), y1.max(v));
            }
        }
        let bbox = if total > 0 {
            BBox::from_corners(x0 as f64 - 0.5, y0 as f64 - 0.5, x1 as f64 + 0.5, y1 as f64 + 0.5)
        } else {
            BBox::around(joints.iter().map(|j| (j.u, j.v))).unwrap_or_default()
        };
        annotations.push(PersonAnnotation { joints, bbox, difficult: 2 * seen < total, joints3d: Some(joints3d) });
    }
    RgbdFrame::new(ColorImage::from_vec(w, h, color)?, DepthImage::from_vec(w, h, depth)?, intr, annotations)
}
