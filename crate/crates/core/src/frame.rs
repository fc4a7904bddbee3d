//! RGB-D frames, person annotations and their on-disk format.
//!
//! A frame is stored as three files sharing a stem: `<stem>.json` (the
//! manifest), `<stem>.color.png` (8-bit RGB) and `<stem>.depth.png`
//! (16-bit grayscale, millimeters, `0` = invalid).

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Point3};
use crate::image::{ColorImage, DepthImage};

pub const NUM_JOINTS: usize = 9;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
];

/// Indices into [`JOINT_NAMES`].
pub mod joint {
    pub const HEAD: usize = 0;
    pub const L_SHOULDER: usize = 1;
    pub const R_SHOULDER: usize = 2;
    pub const L_ELBOW: usize = 3;
    pub const R_ELBOW: usize = 4;
    pub const L_WRIST: usize = 5;
    pub const R_WRIST: usize = 6;
    pub const L_HIP: usize = 7;
    pub const R_HIP: usize = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

/// Axis-aligned pixel box: top-left corner plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn x1(&self) -> f64 {
        self.x + self.w
    }

    pub fn y1(&self) -> f64 {
        self.y + self.h
    }

    /// Tight box around a point set.
    pub fn around(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut it = points.into_iter();
        let (u, v) = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (u, v, u, v);
        for (u, v) in it {
            x0 = x0.min(u);
            y0 = y0.min(v);
            x1 = x1.max(u);
            y1 = y1.max(v);
        }
        Some(Self::from_corners(x0, y0, x1, y1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonAnnotation {
    pub joints: [Joint; NUM_JOINTS],
    pub bbox: BBox,
    pub difficult: bool,
    /// Surface points behind each joint pixel, when the producer knows them.
    pub joints3d: Option<[Point3; NUM_JOINTS]>,
}

impl PersonAnnotation {
    pub fn visible_count(&self) -> usize {
        self.joints.iter().filter(|j| j.visible).count()
    }

    /// Whether this person qualifies as a pose sample (more than six visible joints).
    pub fn has_pose(&self) -> bool {
        self.visible_count() > 6
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub intrinsics: CameraIntrinsics,
    pub annotations: Vec<PersonAnnotation>,
}

impl RgbdFrame {
    pub fn new(
        color: ColorImage,
        depth: DepthImage,
        intrinsics: CameraIntrinsics,
        annotations: Vec<PersonAnnotation>,
    ) -> Result<Self> {
        let frame = Self { color, depth, intrinsics, annotations };
        frame.validate()?;
        Ok(frame)
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }

    pub fn validate(&self) -> Result<()> {
        if self.color.width() != self.depth.width() || self.color.height() != self.depth.height() {
            return Err(Error::DimensionMismatch(format!(
                "color is {}x{}, depth is {}x{}",
                self.color.width(),
                self.color.height(),
                self.depth.width(),
                self.depth.height()
            )));
        }
        self.intrinsics.validate()?;
        let (w, h) = (self.width() as f64, self.height() as f64);
        for (i, a) in self.annotations.iter().enumerate() {
            if a.bbox.area() <= 0.0 {
                return Err(Error::ConfigInvalid(format!("annotation {i}: bbox has no area")));
            }
            for (j, jt) in a.joints.iter().enumerate() {
                if !(jt.u >= 0.0 && jt.v >= 0.0 && jt.u <= w - 1.0 && jt.v <= h - 1.0) {
                    return Err(Error::ConfigInvalid(format!(
                        "annotation {i}: joint {} at ({}, {}) outside the image",
                        JOINT_NAMES[j], jt.u, jt.v
                    )));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// JSON manifest

#[derive(Serialize, Deserialize)]
struct FrameJson {
    color: String,
    depth: String,
    intrinsics: IntrinsicsJson,
    #[serde(default)]
    annotations: Vec<AnnotationJson>,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

#[derive(Serialize, Deserialize)]
struct JointsJson<T> {
    head: T,
    left_shoulder: T,
    right_shoulder: T,
    left_elbow: T,
    right_elbow: T,
    left_wrist: T,
    right_wrist: T,
    left_hip: T,
    right_hip: T,
}

impl<T: Clone> JointsJson<T> {
    fn from_array(a: &[T; NUM_JOINTS]) -> Self {
        Self {
            head: a[0].clone(),
            left_shoulder: a[1].clone(),
            right_shoulder: a[2].clone(),
            left_elbow: a[3].clone(),
            right_elbow: a[4].clone(),
            left_wrist: a[5].clone(),
            right_wrist: a[6].clone(),
            left_hip: a[7].clone(),
            right_hip: a[8].clone(),
        }
    }

    fn into_array(self) -> [T; NUM_JOINTS] {
        [
            self.head,
            self.left_shoulder,
            self.right_shoulder,
            self.left_elbow,
            self.right_elbow,
            self.left_wrist,
            self.right_wrist,
            self.left_hip,
            self.right_hip,
        ]
    }
}

#[derive(Serialize, Deserialize)]
struct AnnotationJson {
    joints: JointsJson<(f64, f64, bool)>,
    bbox: [f64; 4],
    #[serde(default)]
    difficult: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    joints3d: Option<JointsJson<[f64; 3]>>,
}

impl From<&PersonAnnotation> for AnnotationJson {
    fn from(a: &PersonAnnotation) -> Self {
        Self {
            joints: JointsJson::from_array(&a.joints.map(|j| (j.u, j.v, j.visible))),
            bbox: [a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h],
            difficult: a.difficult,
            joints3d: a.joints3d.map(|p| JointsJson::from_array(&p.map(|q| [q.x, q.y, q.z]))),
        }
    }
}

impl From<AnnotationJson> for PersonAnnotation {
    fn from(a: AnnotationJson) -> Self {
        Self {
            joints: a.joints.into_array().map(|(u, v, visible)| Joint { u, v, visible }),
            bbox: BBox::new(a.bbox[0], a.bbox[1], a.bbox[2], a.bbox[3]),
            difficult: a.difficult,
            joints3d: a.joints3d.map(|j| j.into_array().map(|p| Point3::new(p[0], p[1], p[2]))),
        }
    }
}

/// Byte offset of a (1-based) line/column position inside `text`.
pub(crate) fn byte_offset(text: &str, line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)) as u64;
        }
        offset += l.len();
    }
    text.len() as u64
}

pub(crate) fn json_error(path: &Path, text: &str, e: serde_json::Error) -> Error {
    Error::Format { path: path.to_path_buf(), offset: byte_offset(text, e.line(), e.column()), reason: e.to_string() }
}

fn sibling(json_path: &Path, suffix: &str) -> (PathBuf, String) {
    let stem = json_path.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    let name = format!("{stem}.{suffix}");
    (json_path.with_file_name(&name), name)
}

/// Writes `frame` as `<path>` plus its two PNG siblings.
///
/// Depth is rounded to whole millimeters, so the round trip is bit-exact for
/// frames whose depths are already `mm / 1000.0` (the synthetic generator's output).
pub fn save_frame(frame: &RgbdFrame, path: &Path) -> Result<()> {
    frame.validate()?;
    let (color_path, color_name) = sibling(path, "color.png");
    let (depth_path, depth_name) = sibling(path, "depth.png");
    write_color_png(&frame.color, &color_path)?;
    write_depth_png(&frame.depth, &depth_path)?;
    let json = FrameJson {
        color: color_name,
        depth: depth_name,
        intrinsics: IntrinsicsJson {
            fx: frame.intrinsics.fx,
            fy: frame.intrinsics.fy,
            cx: frame.intrinsics.cx,
            cy: frame.intrinsics.cy,
        },
        annotations: frame.annotations.iter().map(AnnotationJson::from).collect(),
    };
    let text = serde_json::to_string_pretty(&json).map_err(|e| Error::Io(e.into()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_frame(path: &Path) -> Result<RgbdFrame> {
    let text = fs::read_to_string(path)?;
    let json: FrameJson = serde_json::from_str(&text).map_err(|e| json_error(path, &text, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let color = read_color_png(&dir.join(&json.color))?;
    let depth = read_depth_png(&dir.join(&json.depth))?;
    let i = &json.intrinsics;
    let intrinsics = CameraIntrinsics::new(i.fx, i.fy, i.cx, i.cy)?;
    let annotations = json.annotations.into_iter().map(PersonAnnotation::from).collect();
    RgbdFrame::new(color, depth, intrinsics, annotations)
}

// ---------------------------------------------------------------------------
// PNG

const PNG_SIGNATURE: [u8; 8] = [137, 80, 78, 71, 13, 10, 26, 10];

/// Walks the chunk structure and reports the first byte where it breaks.
fn check_png_structure(path: &Path, bytes: &[u8]) -> Result<()> {
    let fail = |offset: usize, reason: &str| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 8 {
        return Err(fail(bytes.len(), "file shorter than the PNG signature"));
    }
    if bytes[..8] != PNG_SIGNATURE {
        return Err(fail(0, "bad PNG signature"));
    }
    let mut pos = 8;
    loop {
        if pos + 8 > bytes.len() {
            return Err(fail(pos, "truncated chunk header"));
        }
        let len = u32::from_be_bytes([bytes[pos], bytes[pos + 1], bytes[pos + 2], bytes[pos + 3]]) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let end = pos + 12 + len;
        if end > bytes.len() {
            return Err(fail(pos, "truncated chunk body"));
        }
        if kind == b"IEND" {
            return Ok(());
        }
        pos = end;
    }
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<(png::OutputInfo, Vec<u8>)> {
    check_png_structure(path, bytes)?;
    let err = |e: png::DecodingError| Error::Format { path: path.to_path_buf(), offset: 0, reason: e.to_string() };
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        offset: 0,
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(err)?;
    buf.truncate(info.buffer_size());
    Ok((info, buf))
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let bytes = fs::read(path)?;
    let (info, buf) = decode_png(path, &bytes)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("depth must be 16-bit grayscale, found {:?} {:?}", info.color_type, info.bit_depth),
        });
    }
    let data = buf.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 1000.0).collect();
    DepthImage::from_vec(info.width as usize, info.height as usize, data)
}

pub fn read_color_png(path: &Path) -> Result<ColorImage> {
    let bytes = fs::read(path)?;
    let (info, buf) = decode_png(path, &bytes)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("color must be 8-bit RGB, found {:?} {:?}", info.color_type, info.bit_depth),
        });
    }
    ColorImage::from_vec(info.width as usize, info.height as usize, buf)
}

fn encode_png(path: &Path, w: usize, h: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(depth);
    let to_io = |e: png::EncodingError| Error::Io(std::io::Error::other(e.to_string()));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)?;
    Ok(())
}

pub fn write_depth_png(depth: &DepthImage, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(depth.data().len() * 2);
    for &z in depth.data() {
        let mm = (z * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
        bytes.extend_from_slice(&mm.to_be_bytes());
    }
    encode_png(path, depth.width(), depth.height(), png::ColorType::Grayscale, png::BitDepth::Sixteen, &bytes)
}

pub fn write_color_png(color: &ColorImage, path: &Path) -> Result<()> {
    encode_png(path, color.width(), color.height(), png::ColorType::Rgb, png::BitDepth::Eight, color.data())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frame() -> RgbdFrame {
        let (w, h) = (16, 12);
        let depth = DepthImage::from_fn(w, h, |u, v| if u == 3 && v == 4 { 0.0 } else { (1000 + 7 * u + 13 * v) as f64 / 1000.0 })
            .unwrap();
        let mut color = ColorImage::new(w, h).unwrap();
        for v in 0..h {
            for u in 0..w {
                color.set(u, v, [(u * 10) as u8, (v * 20) as u8, 99]);
            }
        }
        let joints = std::array::from_fn(|i| Joint { u: i as f64, v: (i % 4) as f64, visible: i != 2 });
        let ann = PersonAnnotation {
            joints,
            bbox: BBox::new(0.0, 0.0, 9.0, 4.0),
            difficult: true,
            joints3d: Some(std::array::from_fn(|i| Point3::new(0.1 * i as f64, -0.25, 1.0 + 1.0 / 3.0))),
        };
        RgbdFrame::new(color, depth, CameraIntrinsics::centered(20.0, w, h).unwrap(), vec![ann]).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f0.json");
        let frame = sample_frame();
        save_frame(&frame, &path).unwrap();
        let back = load_frame(&path).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn mismatched_depth_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f0.json");
        save_frame(&sample_frame(), &path).unwrap();
        write_depth_png(&DepthImage::new(5, 5).unwrap(), &dir.path().join("f0.depth.png")).unwrap();
        assert!(matches!(load_frame(&path), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn truncated_png_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f0.json");
        save_frame(&sample_frame(), &path).unwrap();
        let depth_path = dir.path().join("f0.depth.png");
        let bytes = fs::read(&depth_path).unwrap();
        fs::write(&depth_path, &bytes[..bytes.len() - 20]).unwrap();
        match load_frame(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset >= 8 && offset < bytes.len() as u64),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_json_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f0.json");
        save_frame(&sample_frame(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..100]).unwrap();
        match load_frame(&path) {
            Err(Error::Format { offset, .. }) => assert!(offset <= 100),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn pose_rule_needs_seven_visible() {
        let mut a = sample_frame().annotations[0].clone();
        assert_eq!(a.visible_count(), 8);
        assert!(a.has_pose());
        a.joints[0].visible = false;
        a.joints[1].visible = false;
        assert!(!a.has_pose());
    }

    #[test]
    fn joints_outside_image_rejected() {
        let mut f = sample_frame();
        f.annotations[0].joints[0].u = 100.0;
        assert!(f.validate().is_err());
    }
}
