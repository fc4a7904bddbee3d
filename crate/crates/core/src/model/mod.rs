//! Mixtures-of-parts model: templates, deformation weights and biases.

mod io;
mod psi;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DescriptorConfig, FeatureMap, PyramidConfig};
use crate::frame::{joint, JOINT_NAMES, NUM_JOINTS};

pub use io::{deserialize_model, load_model, save_model, serialize_model, MODEL_MAGIC, MODEL_VERSION};
pub use psi::{psi, psi_2d, psi_3d_1, psi_3d_2, psi_3d_3, psi_3d_4, psi_into, Anchor, DistanceReading, Placement, Variant};

pub const DEFAULT_TYPES: usize = 6;
pub const DEFAULT_TEMPLATE_SIZE: usize = 5;
pub const DEFAULT_MAX_DIST: f64 = 0.9;
/// Upper bound on every squared-displacement weight.
pub const MAX_SQUARED_WEIGHT: f64 = -0.001;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartSpec {
    pub id: usize,
    pub parent: Option<usize>,
    pub name: String,
}

impl PartSpec {
    /// Head at the root, arms hanging off the shoulders, hips off the same-side shoulder.
    pub fn upper_body() -> Vec<PartSpec> {
        let parent = |j: usize| -> Option<usize> {
            match j {
                joint::HEAD => None,
                joint::L_SHOULDER | joint::R_SHOULDER => Some(joint::HEAD),
                joint::L_ELBOW => Some(joint::L_SHOULDER),
                joint::R_ELBOW => Some(joint::R_SHOULDER),
                joint::L_WRIST => Some(joint::L_ELBOW),
                joint::R_WRIST => Some(joint::R_ELBOW),
                joint::L_HIP => Some(joint::L_SHOULDER),
                joint::R_HIP => Some(joint::R_SHOULDER),
                _ => unreachable!(),
            }
        };
        (0..NUM_JOINTS).map(|j| PartSpec { id: j, parent: parent(j), name: JOINT_NAMES[j].to_string() }).collect()
    }
}

/// Checks that parent links form one tree. Returns the root.
pub fn validate_tree(parts: &[PartSpec]) -> Result<usize> {
    let bad = |m: String| Err(Error::ConfigInvalid(m));
    if parts.is_empty() {
        return bad("part tree is empty".into());
    }
    let mut root = None;
    for (i, p) in parts.iter().enumerate() {
        if p.id != i {
            return bad(format!("part {i} carries id {}", p.id));
        }
        match p.parent {
            None if root.is_some() => return bad("part tree has several roots".into()),
            None => root = Some(i),
            Some(q) if q >= parts.len() || q == i => return bad(format!("part {i} has invalid parent {q}")),
            Some(_) => {}
        }
    }
    let root = match root {
        Some(r) => r,
        None => return bad("part tree has no root".into()),
    };
    for i in 0..parts.len() {
        let (mut cur, mut steps) = (i, 0);
        while let Some(q) = parts[cur].parent {
            cur = q;
            steps += 1;
            if steps > parts.len() {
                return bad(format!("part {i} lies on a cycle"));
            }
        }
    }
    Ok(root)
}

/// Deformation weights, anchor and co-occurrence bias of one edge for one type pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub weights: Vec<f64>,
    pub anchor: Anchor,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsModel {
    pub variant: Variant,
    pub reading: DistanceReading,
    pub parts: Vec<PartSpec>,
    /// Number of types kept for each part.
    pub types: Vec<usize>,
    pub template_w: usize,
    pub template_h: usize,
    pub channels: usize,
    /// `[part][type]`, `template_h x template_w` cells, channel-fastest.
    pub templates: Vec<Vec<Vec<f32>>>,
    pub part_bias: Vec<Vec<f64>>,
    /// `[child part][tc * types[parent] + tp]`; empty for the root.
    pub edges: Vec<Vec<EdgeParams>>,
    pub descriptors: DescriptorConfig,
    pub pyramid: PyramidConfig,
    pub max_dist: f64,
    /// Root score a pose needs to be reported as a detection.
    pub threshold: f64,
    /// Box derived from the part locations, expanded by these fractions of
    /// its width/height: left, top, right, bottom.
    pub box_margin: [f64; 4],
}

impl PsModel {
    /// All-zero weights, with squared deformation terms at the clamp bound.
    pub fn zeros(
        variant: Variant,
        parts: Vec<PartSpec>,
        types: Vec<usize>,
        descriptors: DescriptorConfig,
        template: usize,
    ) -> Result<Self> {
        validate_tree(&parts)?;
        if types.len() != parts.len() || types.contains(&0) {
            return Err(Error::ConfigInvalid("every part needs at least one type".into()));
        }
        let channels = descriptors.channels();
        let tlen = template * template * channels;
        let templates = types.iter().map(|&t| vec![vec![0.0; tlen]; t]).collect();
        let part_bias = types.iter().map(|&t| vec![0.0; t]).collect();
        let mut weights = vec![0.0; variant.dims()];
        for &k in variant.squared_terms() {
            weights[k] = MAX_SQUARED_WEIGHT;
        }
        let edges = parts
            .iter()
            .map(|p| match p.parent {
                None => Vec::new(),
                Some(q) => vec![EdgeParams { weights: weights.clone(), anchor: Anchor::default(), bias: 0.0 }; types[p.id] * types[q]],
            })
            .collect();
        Ok(Self {
            variant,
            reading: DistanceReading::default(),
            parts,
            types,
            template_w: template,
            template_h: template,
            channels,
            templates,
            part_bias,
            edges,
            pyramid: PyramidConfig { min_cells: template, ..PyramidConfig::default() },
            descriptors,
            max_dist: DEFAULT_MAX_DIST,
            threshold: 0.0,
            box_margin: [0.0; 4],
        })
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn root(&self) -> usize {
        self.parts.iter().position(|p| p.parent.is_none()).expect("validated tree has a root")
    }

    pub fn children(&self, p: usize) -> Vec<usize> {
        self.parts.iter().filter(|c| c.parent == Some(p)).map(|c| c.id).collect()
    }

    /// Parts ordered so every child precedes its parent; siblings by id.
    pub fn leaves_first(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.parts.len());
        let mut stack = vec![self.root()];
        while let Some(p) = stack.pop() {
            order.push(p);
            let mut ch = self.children(p);
            ch.reverse();
            stack.extend(ch);
        }
        order.reverse();
        order
    }

    /// Parts grouped by distance to the deepest leaf below them: group 0 are
    /// leaves, the last group is the root. Parts within a group are independent.
    pub fn height_groups(&self) -> Vec<Vec<usize>> {
        let mut height = vec![0usize; self.parts.len()];
        for p in self.leaves_first() {
            if let Some(q) = self.parts[p].parent {
                height[q] = height[q].max(height[p] + 1);
            }
        }
        let max = height.iter().copied().max().unwrap_or(0);
        (0..=max).map(|h| (0..self.parts.len()).filter(|&p| height[p] == h).collect()).collect()
    }

    pub fn edge(&self, child: usize, tc: usize, tp: usize) -> &EdgeParams {
        let parent = self.parts[child].parent.expect("root has no edge");
        &self.edges[child][tc * self.types[parent] + tp]
    }

    pub fn edge_mut(&mut self, child: usize, tc: usize, tp: usize) -> &mut EdgeParams {
        let parent = self.parts[child].parent.expect("root has no edge");
        let tpn = self.types[parent];
        &mut self.edges[child][tc * tpn + tp]
    }

    pub fn template_len(&self) -> usize {
        self.template_w * self.template_h * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        validate_tree(&self.parts)?;
        let n = self.parts.len();
        let corrupt = |m: String| Err(Error::CorruptModel(m));
        if self.types.len() != n || self.templates.len() != n || self.part_bias.len() != n || self.edges.len() != n {
            return corrupt("per-part tables disagree with the part count".into());
        }
        if self.descriptors.channels() != self.channels {
            return corrupt(format!("descriptor set has {} channels, templates {}", self.descriptors.channels(), self.channels));
        }
        for p in 0..n {
            if self.templates[p].len() != self.types[p] || self.part_bias[p].len() != self.types[p] {
                return corrupt(format!("part {p} has inconsistent type tables"));
            }
            if self.templates[p].iter().any(|t| t.len() != self.template_len() || t.iter().any(|v| !v.is_finite())) {
                return corrupt(format!("part {p} has a malformed template"));
            }
            let want = self.parts[p].parent.map_or(0, |q| self.types[p] * self.types[q]);
            if self.edges[p].len() != want {
                return corrupt(format!("part {p} has {} edge entries, expected {want}", self.edges[p].len()));
            }
            for e in &self.edges[p] {
                if e.weights.len() != self.variant.dims() || e.weights.iter().any(|w| !w.is_finite()) || !e.bias.is_finite() {
                    return corrupt(format!("part {p} has malformed deformation parameters"));
                }
            }
        }
        Ok(())
    }

    /// Errors if a squared deformation weight is not strictly negative.
    pub fn check_concave(&self) -> Result<()> {
        for e in self.edges.iter().flatten() {
            let sq = self.variant.squared_terms();
            if sq.iter().any(|&k| !(e.weights[k] < 0.0)) {
                let a = sq.first().map_or(0.0, |&k| e.weights[k]);
                let b = sq.get(1).map_or(0.0, |&k| e.weights[k]);
                return Err(Error::NonConcaveDeformation(a, b));
            }
        }
        Ok(())
    }

    /// Clamps squared weights to at most `MAX_SQUARED_WEIGHT` and the distance
    /// weight to at most zero.
    pub fn clamp_deformation(&mut self) {
        let sq = self.variant.squared_terms();
        let dist = self.variant.distance_term();
        for e in self.edges.iter_mut().flatten() {
            for &k in sq {
                e.weights[k] = e.weights[k].min(MAX_SQUARED_WEIGHT);
            }
            if let Some(k) = dist {
                e.weights[k] = e.weights[k].min(0.0);
            }
        }
    }
}

/// Template response plus part bias, with the template centered on cell `(col, row)`.
pub fn appearance_score(model: &PsModel, fmap: &FeatureMap, part: usize, ty: usize, loc: (i64, i64)) -> Result<f64> {
    if fmap.channels != model.channels {
        return Err(Error::GridMismatch(format!("map has {} channels, model {}", fmap.channels, model.channels)));
    }
    let (c0, r0) = (loc.0 - (model.template_w / 2) as i64, loc.1 - (model.template_h / 2) as i64);
    if c0 < 0 || r0 < 0 || c0 as usize + model.template_w > fmap.cells_w || r0 as usize + model.template_h > fmap.cells_h {
        return Err(Error::OutOfBounds { col: loc.0, row: loc.1, cells_w: fmap.cells_w, cells_h: fmap.cells_h });
    }
    Ok(template_dot(model, fmap, part, ty, c0 as usize, r0 as usize) + model.part_bias[part][ty])
}

/// Dot product of a template with the window whose top-left cell is `(c0, r0)`.
pub(crate) fn template_dot(model: &PsModel, fmap: &FeatureMap, part: usize, ty: usize, c0: usize, r0: usize) -> f64 {
    let t = &model.templates[part][ty];
    let row_len = model.template_w * model.channels;
    let mut sum = 0.0f64;
    for dy in 0..model.template_h {
        let start = ((r0 + dy) * fmap.cells_w + c0) * fmap.channels;
        sum += dot_f32(&t[dy * row_len..(dy + 1) * row_len], &fmap.values[start..start + row_len]);
    }
    sum
}

/// Dot product in eight independent f32 lanes, summed in a fixed order.
#[inline]
pub(crate) fn dot_f32(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    acc.iter().map(|&v| v as f64).sum::<f64>() + tail as f64
}

/// Deformation score plus co-occurrence bias of `child` (type `tc`) under its parent (type `tp`).
pub fn pairwise_score(
    model: &PsModel,
    child: usize,
    tc: usize,
    tp: usize,
    zc: &Placement,
    zp: &Placement,
) -> Result<f64> {
    let e = model.edge(child, tc, tp);
    let f = psi(model.variant, model.reading, zc, zp, &e.anchor)?;
    Ok(f.iter().zip(&e.weights).map(|(a, b)| a * b).sum::<f64>() + e.bias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Descriptor;
    use crate::geometry::Point3;

    fn tiny_model(variant: Variant) -> PsModel {
        let parts = vec![
            PartSpec { id: 0, parent: None, name: "a".into() },
            PartSpec { id: 1, parent: Some(0), name: "b".into() },
        ];
        PsModel::zeros(variant, parts, vec![1, 1], DescriptorConfig::new(vec![Descriptor::Honv]), 5).unwrap()
    }

    #[test]
    fn upper_body_tree() {
        let parts = PartSpec::upper_body();
        assert_eq!(validate_tree(&parts).unwrap(), joint::HEAD);
        assert_eq!(parts[joint::L_HIP].parent, Some(joint::L_SHOULDER));
        assert_eq!(parts[joint::R_WRIST].parent, Some(joint::R_ELBOW));
        let m = PsModel::zeros(Variant::Psi2d, parts, vec![2; 9], DescriptorConfig::default(), 5).unwrap();
        let order = m.leaves_first();
        for (i, &p) in order.iter().enumerate() {
            if let Some(q) = m.parts[p].parent {
                assert!(order[i + 1..].contains(&q));
            }
        }
        let groups = m.height_groups();
        assert_eq!(groups.last().unwrap(), &vec![joint::HEAD]);
        assert_eq!(groups[0], vec![joint::L_WRIST, joint::R_WRIST, joint::L_HIP, joint::R_HIP]);
    }

    #[test]
    fn rejects_cycles_and_double_roots() {
        let cyc = vec![
            PartSpec { id: 0, parent: None, name: "r".into() },
            PartSpec { id: 1, parent: Some(2), name: "x".into() },
            PartSpec { id: 2, parent: Some(1), name: "y".into() },
        ];
        assert!(validate_tree(&cyc).is_err());
        let two = vec![PartSpec { id: 0, parent: None, name: "r".into() }, PartSpec { id: 1, parent: None, name: "s".into() }];
        assert!(validate_tree(&two).is_err());
    }

    #[test]
    fn appearance_fixtures() {
        let mut m = tiny_model(Variant::Psi2d);
        m.part_bias[0][0] = 0.25;
        let fmap = FeatureMap { cells_w: 7, cells_h: 7, channels: m.channels, cell_size: 6, scale: 1.0, values: vec![3.0; 49 * m.channels] };
        assert_eq!(appearance_score(&m, &fmap, 0, 0, (3, 3)).unwrap(), 0.25);
        m.part_bias[0][0] = 0.0;
        m.templates[0][0][0] = 2.0;
        assert_eq!(appearance_score(&m, &fmap, 0, 0, (3, 3)).unwrap(), 6.0);
        assert!(matches!(appearance_score(&m, &fmap, 0, 0, (1, 3)), Err(Error::OutOfBounds { .. })));
        assert!(matches!(appearance_score(&m, &fmap, 0, 0, (3, 5)), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn pairwise_fixtures() {
        let mut m = tiny_model(Variant::Psi2d);
        let (zc, zp) = (Placement::new(4.0, 2.0, None), Placement::new(3.0, 2.0, None));
        m.edge_mut(1, 0, 0).weights = vec![0.0; 4];
        m.edge_mut(1, 0, 0).bias = 0.7;
        assert_eq!(pairwise_score(&m, 1, 0, 0, &zc, &zp).unwrap(), 0.7);
        m.edge_mut(1, 0, 0).weights = vec![-1.0; 4];
        m.edge_mut(1, 0, 0).bias = 0.0;
        assert_eq!(pairwise_score(&m, 1, 0, 0, &zc, &zp).unwrap(), -2.0);
        m.edge_mut(1, 0, 0).anchor.pix = [1.0, 0.0];
        m.edge_mut(1, 0, 0).bias = 0.3;
        assert_eq!(pairwise_score(&m, 1, 0, 0, &zc, &zp).unwrap(), 0.3);

        let mut m3 = tiny_model(Variant::Psi3d1);
        let e = m3.edge_mut(1, 0, 0);
        e.weights = vec![-1.0; 6];
        e.anchor.xyz = [0.0, 0.5, 0.0];
        e.bias = 0.1;
        let zc = Placement::new(0.0, 5.0, Some(Point3::new(0.0, 0.5, 2.0)));
        let zp = Placement::new(0.0, 0.0, Some(Point3::new(0.0, 0.0, 2.0)));
        assert_eq!(pairwise_score(&m3, 1, 0, 0, &zc, &zp).unwrap(), 0.1);
        assert!(pairwise_score(&m3, 1, 0, 0, &Placement::new(0.0, 0.0, None), &zp).is_err());
    }

    #[test]
    fn clamping_and_concavity() {
        let mut m = tiny_model(Variant::Psi3d2);
        m.check_concave().unwrap();
        m.edge_mut(1, 0, 0).weights = vec![0.5; 7];
        assert!(matches!(m.check_concave(), Err(Error::NonConcaveDeformation(..))));
        m.clamp_deformation();
        let w = &m.edge(1, 0, 0).weights;
        assert_eq!(w[0], 0.0);
        for k in [2, 4, 6] {
            assert_eq!(w[k], MAX_SQUARED_WEIGHT);
        }
        assert_eq!(w[1], 0.5);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
        assert!((dot_f32(&a, &b) - naive).abs() < 1e-5);
    }
}
