//! Binary model file.
//!
//! All numbers little-endian. Layout:
//!
//! ```text
//! "PS3D" u32 version
//! u8 variant (0 psi2d .. 4 psi3d4)  u8 reading (0 anchor-relative, 1 absolute)
//! u32 n_parts, then per part: i32 parent (-1 root), u32 name length, name bytes
//! per part: u32 number of types
//! u32 template_w  u32 template_h  u32 channels
//! u32 cell_size  u32 n_descriptors, then u8 each (0 ihog, 1 dhog, 2 honv, 3 hdd)
//! u32 hdd scales  u32 hdd levels  f64 hdd clip
//! f64 pyramid step  u32 min cells  u32 max levels
//! f64 max_dist  f64 threshold  4 x f64 box margin
//! templates: part-major, type-minor, template_h*template_w*channels f32 each
//! part biases: part-major, f64
//! edges: for every non-root part in id order, for tc, for tp:
//!        f64 x dims weights, f64 ac ar ax ay az dist, f64 bias
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Anchor, DistanceReading, EdgeParams, PartSpec, PsModel, Variant};
use crate::error::{Error, Result};
use crate::features::{Descriptor, DescriptorConfig, HddConfig, PyramidConfig};

pub const MODEL_MAGIC: &[u8; 4] = b"PS3D";
pub const MODEL_VERSION: u32 = 1;

const DESCRIPTORS: [Descriptor; 4] = [Descriptor::IHog, Descriptor::DHog, Descriptor::Honv, Descriptor::Hdd];

pub fn serialize_model(model: &PsModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut w = Vec::new();
    w.extend_from_slice(MODEL_MAGIC);
    w.write_u32::<LE>(MODEL_VERSION)?;
    w.write_u8(model.variant.code())?;
    w.write_u8(match model.reading {
        DistanceReading::AnchorRelative => 0,
        DistanceReading::Absolute => 1,
    })?;
    w.write_u32::<LE>(model.parts.len() as u32)?;
    for p in &model.parts {
        w.write_i32::<LE>(p.parent.map_or(-1, |q| q as i32))?;
        w.write_u32::<LE>(p.name.len() as u32)?;
        w.extend_from_slice(p.name.as_bytes());
    }
    for &t in &model.types {
        w.write_u32::<LE>(t as u32)?;
    }
    w.write_u32::<LE>(model.template_w as u32)?;
    w.write_u32::<LE>(model.template_h as u32)?;
    w.write_u32::<LE>(model.channels as u32)?;
    let d = &model.descriptors;
    w.write_u32::<LE>(d.cell_size as u32)?;
    w.write_u32::<LE>(d.descriptors.len() as u32)?;
    for desc in &d.descriptors {
        w.write_u8(DESCRIPTORS.iter().position(|x| x == desc).unwrap() as u8)?;
    }
    w.write_u32::<LE>(d.hdd.n_scales as u32)?;
    w.write_u32::<LE>(d.hdd.quant_levels as u32)?;
    w.write_f64::<LE>(d.hdd.response_clip)?;
    w.write_f64::<LE>(model.pyramid.scale_step)?;
    w.write_u32::<LE>(model.pyramid.min_cells as u32)?;
    w.write_u32::<LE>(model.pyramid.max_levels as u32)?;
    w.write_f64::<LE>(model.max_dist)?;
    w.write_f64::<LE>(model.threshold)?;
    for m in model.box_margin {
        w.write_f64::<LE>(m)?;
    }
    for t in model.templates.iter().flatten() {
        for &v in t {
            w.write_f32::<LE>(v)?;
        }
    }
    for &b in model.part_bias.iter().flatten() {
        w.write_f64::<LE>(b)?;
    }
    for e in model.edges.iter().flatten() {
        for &x in &e.weights {
            w.write_f64::<LE>(x)?;
        }
        let a = &e.anchor;
        for x in [a.pix[0], a.pix[1], a.xyz[0], a.xyz[1], a.xyz[2], a.dist, e.bias] {
            w.write_f64::<LE>(x)?;
        }
    }
    Ok(w)
}

fn corrupt(r: &Cursor<&[u8]>, what: &str) -> Error {
    Error::CorruptModel(format!("{what} at byte {}", r.position()))
}

pub fn deserialize_model(bytes: &[u8]) -> Result<PsModel> {
    let mut r = Cursor::new(bytes);
    read_model(&mut r).map_err(|e| match e {
        Error::Io(io) => Error::CorruptModel(format!("truncated model ({io}) at byte {}", r.position())),
        other => other,
    })
}

fn read_count(r: &mut Cursor<&[u8]>, limit: u32, what: &str) -> Result<usize> {
    let n = r.read_u32::<LE>()?;
    if n > limit {
        return Err(corrupt(r, &format!("implausible {what} {n}")));
    }
    Ok(n as usize)
}

fn read_model(r: &mut Cursor<&[u8]>) -> Result<PsModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(corrupt(r, "bad magic"));
    }
    let version = r.read_u32::<LE>()?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: MODEL_VERSION });
    }
    let variant = Variant::from_code(r.read_u8()?).ok_or_else(|| corrupt(r, "unknown variant"))?;
    let reading = match r.read_u8()? {
        0 => DistanceReading::AnchorRelative,
        1 => DistanceReading::Absolute,
        _ => return Err(corrupt(r, "unknown distance reading")),
    };
    let n = read_count(r, 1024, "part count")?;
    let mut parts = Vec::with_capacity(n);
    for id in 0..n {
        let parent = r.read_i32::<LE>()?;
        let len = read_count(r, 4096, "name length")?;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| corrupt(r, "part name is not UTF-8"))?;
        parts.push(PartSpec { id, parent: if parent < 0 { None } else { Some(parent as usize) }, name });
    }
    let mut types = Vec::with_capacity(n);
    for _ in 0..n {
        types.push(read_count(r, 1024, "type count")?);
    }
    let template_w = read_count(r, 1024, "template width")?;
    let template_h = read_count(r, 1024, "template height")?;
    let channels = read_count(r, 1 << 16, "channel count")?;
    let cell_size = read_count(r, 1024, "cell size")?;
    let nd = read_count(r, 16, "descriptor count")?;
    let mut descriptors = Vec::with_capacity(nd);
    for _ in 0..nd {
        let c = r.read_u8()? as usize;
        descriptors.push(*DESCRIPTORS.get(c).ok_or_else(|| corrupt(r, "unknown descriptor"))?);
    }
    let hdd = HddConfig {
        n_scales: read_count(r, 64, "HDD scale count")?,
        quant_levels: read_count(r, 1024, "HDD level count")?,
        response_clip: r.read_f64::<LE>()?,
    };
    let pyramid = PyramidConfig {
        scale_step: r.read_f64::<LE>()?,
        min_cells: read_count(r, 1024, "pyramid minimum")?,
        max_levels: read_count(r, 1024, "pyramid depth")?,
    };
    let max_dist = r.read_f64::<LE>()?;
    let threshold = r.read_f64::<LE>()?;
    let mut box_margin = [0.0; 4];
    for m in &mut box_margin {
        *m = r.read_f64::<LE>()?;
    }
    let tlen = template_w * template_h * channels;
    let remaining = bytes_left(r);
    if types.iter().sum::<usize>() * tlen * 4 > remaining {
        return Err(corrupt(r, "template block is truncated"));
    }
    let mut templates = Vec::with_capacity(n);
    for &t in &types {
        let mut per = Vec::with_capacity(t);
        for _ in 0..t {
            let mut v = vec![0f32; tlen];
            r.read_f32_into::<LE>(&mut v)?;
            per.push(v);
        }
        templates.push(per);
    }
    let mut part_bias = Vec::with_capacity(n);
    for &t in &types {
        let mut b = vec![0f64; t];
        r.read_f64_into::<LE>(&mut b)?;
        part_bias.push(b);
    }
    let dims = variant.dims();
    let mut edges = Vec::with_capacity(n);
    for p in &parts {
        let count = match p.parent {
            None => 0,
            Some(q) if q < n => types[p.id] * types[q],
            Some(_) => return Err(corrupt(r, "parent out of range")),
        };
        let mut es = Vec::with_capacity(count);
        for _ in 0..count {
            let mut weights = vec![0f64; dims];
            r.read_f64_into::<LE>(&mut weights)?;
            let mut x = [0f64; 7];
            r.read_f64_into::<LE>(&mut x)?;
            let anchor = Anchor { pix: [x[0], x[1]], xyz: [x[2], x[3], x[4]], dist: x[5] };
            es.push(EdgeParams { weights, anchor, bias: x[6] });
        }
        edges.push(es);
    }
    if bytes_left(r) != 0 {
        return Err(corrupt(r, "trailing bytes"));
    }
    let model = PsModel {
        variant,
        reading,
        parts,
        types,
        template_w,
        template_h,
        channels,
        templates,
        part_bias,
        edges,
        descriptors: DescriptorConfig { descriptors, cell_size, hdd },
        pyramid,
        max_dist,
        threshold,
        box_margin,
    };
    model.validate()?;
    Ok(model)
}

fn bytes_left(r: &Cursor<&[u8]>) -> usize {
    r.get_ref().len().saturating_sub(r.position() as usize)
}

pub fn save_model(model: &PsModel, path: &Path) -> Result<()> {
    fs::write(path, serialize_model(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PsModel> {
    deserialize_model(&fs::read(path)?)
}
