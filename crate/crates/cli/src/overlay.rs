//! Skeleton overlays: left arm white, right arm magenta.

use ps3d::frame::joint;
use ps3d::image::ColorImage;
use ps3d::inference::PoseDetection;

const LEFT_ARM: [u8; 3] = [255, 255, 255];
const RIGHT_ARM: [u8; 3] = [255, 0, 255];
const TORSO: [u8; 3] = [0, 255, 255];
const HEAD: [u8; 3] = [255, 255, 0];
const BOX: [u8; 3] = [0, 255, 0];

fn line(img: &mut ColorImage, a: (f64, f64), b: (f64, f64), rgb: [u8; 3]) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let (u, v) = ((a.0 + t * (b.0 - a.0)).round(), (a.1 + t * (b.1 - a.1)).round());
        if u >= 0.0 && v >= 0.0 && (u as usize) < img.width() && (v as usize) < img.height() {
            img.set(u as usize, v as usize, rgb);
        }
    }
}

/// Draws a detection's box and skeleton onto `img`.
pub fn draw_pose(img: &mut ColorImage, det: &PoseDetection) {
    let b = det.bbox;
    let corners = [(b.x, b.y), (b.x1(), b.y), (b.x1(), b.y1()), (b.x, b.y1())];
    for k in 0..4 {
        line(img, corners[k], corners[(k + 1) % 4], BOX);
    }
    if det.parts.len() != ps3d::frame::NUM_JOINTS {
        return;
    }
    let p = |j: usize| (det.parts[j].u, det.parts[j].v);
    let neck = ((p(joint::L_SHOULDER).0 + p(joint::R_SHOULDER).0) / 2.0, (p(joint::L_SHOULDER).1 + p(joint::R_SHOULDER).1) / 2.0);
    line(img, p(joint::HEAD), neck, HEAD);
    for (a, b) in [
        (joint::L_SHOULDER, joint::R_SHOULDER),
        (joint::L_SHOULDER, joint::L_HIP),
        (joint::R_SHOULDER, joint::R_HIP),
        (joint::L_HIP, joint::R_HIP),
    ] {
        line(img, p(a), p(b), TORSO);
    }
    line(img, p(joint::L_SHOULDER), p(joint::L_ELBOW), LEFT_ARM);
    line(img, p(joint::L_ELBOW), p(joint::L_WRIST), LEFT_ARM);
    line(img, p(joint::R_SHOULDER), p(joint::R_ELBOW), RIGHT_ARM);
    line(img, p(joint::R_ELBOW), p(joint::R_WRIST), RIGHT_ARM);
}
