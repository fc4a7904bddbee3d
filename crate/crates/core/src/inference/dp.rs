//! Exact leaf-to-root dynamic programming over one pyramid level.

use super::gdt::gdt_message;
use super::neighbors::NeighborhoodMap;
use super::state::StateSpace;
use crate::error::{Error, Result};
use crate::model::{pairwise_score, psi_into, PsModel, Placement, Variant};
use crate::par;

/// Which child/parent state pairs a 3D message may use. A part may always sit
/// on the same node as its parent.
#[derive(Debug, Clone, Copy)]
pub enum PairSet<'a> {
    /// Only pairs listed in the neighborhood map.
    Map(&'a NeighborhoodMap),
    /// Every pair of valid nodes.
    All,
}

/// Everything the DP needs about one level.
pub struct LevelInput<'a> {
    pub space: &'a StateSpace,
    /// `[part][type][node]` appearance scores, part bias included.
    pub unary: Vec<Vec<Vec<f64>>>,
    pub pairs: PairSet<'a>,
}

impl LevelInput<'_> {
    /// Whether `node` may host a part: 3D deformation needs a valid depth,
    /// except for the root of a single-part model.
    pub fn allowed(&self, model: &PsModel, node: usize) -> bool {
        !model.variant.is_3d() || model.num_parts() == 1 || self.space.nodes[node].is_valid()
    }

    pub fn placement(&self, node: usize) -> Placement {
        let n = &self.space.nodes[node];
        Placement::new(n.col as f64, n.row as f64, n.point)
    }
}

/// Per-part `(node, type)` assignment, indexed by part id.
pub type Assignment = Vec<(usize, usize)>;

#[derive(Debug, Clone)]
pub struct LevelSolution {
    /// `[type][node]` best total score with the root at that state.
    pub root: Vec<Vec<f64>>,
    root_part: usize,
    /// `[child part][parent type][parent node]` best `(child node, child type)`.
    args: Vec<Vec<Vec<(u32, u32)>>>,
}

impl LevelSolution {
    /// Best root score at `node` over root types, lowest type on ties.
    pub fn best_at(&self, node: usize) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (t, table) in self.root.iter().enumerate() {
            if table[node] > best.0 {
                best = (table[node], t);
            }
        }
        best
    }

    /// Best state overall, lowest (node, type) on ties.
    pub fn best(&self) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for node in 0..self.root.first().map_or(0, Vec::len) {
            let (s, t) = self.best_at(node);
            if s > best.0 {
                best = (s, node, t);
            }
        }
        best
    }

    pub fn backtrace(&self, model: &PsModel, node: usize, ty: usize) -> Assignment {
        let mut out = vec![(usize::MAX, usize::MAX); model.num_parts()];
        out[self.root_part] = (node, ty);
        for p in model.leaves_first().into_iter().rev() {
            let (pn, pt) = out[p];
            for c in model.children(p) {
                let (cn, ct) = self.args[c][pt][pn];
                out[c] = (cn as usize, ct as usize);
            }
        }
        out
    }
}

/// Total score of an assignment, summed parts first and then edges, both by part id.
pub fn configuration_score(model: &PsModel, input: &LevelInput, a: &Assignment) -> Result<f64> {
    let mut s = 0.0;
    for (p, &(node, t)) in a.iter().enumerate() {
        s += input.unary[p][t][node];
    }
    for (c, spec) in model.parts.iter().enumerate() {
        if let Some(p) = spec.parent {
            let (cn, ct) = a[c];
            let (pn, pt) = a[p];
            s += pairwise_score(model, c, ct, pt, &input.placement(cn), &input.placement(pn))?;
        }
    }
    Ok(s)
}

type Message = (Vec<Vec<f64>>, Vec<Vec<(u32, u32)>>);

#[inline]
fn better(val: f64, key: (usize, usize), best: f64, best_key: (usize, usize)) -> bool {
    val > best || (val == best && key < best_key)
}

fn message_2d(model: &PsModel, input: &LevelInput, child: usize, scores: &[Vec<f64>]) -> Result<Message> {
    let parent = model.parts[child].parent.unwrap();
    let g = &input.space.grid;
    let n = input.space.len();
    let (tcn, tpn) = (model.types[child], model.types[parent]);
    let mut val = vec![vec![f64::NEG_INFINITY; n]; tpn];
    let mut arg = vec![vec![(u32::MAX, u32::MAX); n]; tpn];
    for tp in 0..tpn {
        for tc in 0..tcn {
            let e = model.edge(child, tc, tp);
            let w = [e.weights[0], e.weights[1], e.weights[2], e.weights[3]];
            let (m, a) = gdt_message(&scores[tc], g.cells_w, g.cells_h, &w, (e.anchor.pix[0], e.anchor.pix[1]))?;
            for j in 0..n {
                if a[j] == usize::MAX {
                    continue;
                }
                let v = m[j] + e.bias;
                let cur = arg[tp][j];
                if better(v, (a[j], tc), val[tp][j], (cur.0 as usize, cur.1 as usize)) {
                    val[tp][j] = v;
                    arg[tp][j] = (a[j] as u32, tc as u32);
                }
            }
        }
    }
    Ok((val, arg))
}

fn message_3d(model: &PsModel, input: &LevelInput, child: usize, scores: &[Vec<f64>]) -> Result<Message> {
    let parent = model.parts[child].parent.unwrap();
    let n = input.space.len();
    let (tcn, tpn) = (model.types[child], model.types[parent]);
    let dims = model.variant.dims();
    let valid: Vec<usize> = match input.pairs {
        PairSet::All => (0..n).filter(|&i| input.allowed(model, i)).collect(),
        PairSet::Map(_) => Vec::new(),
    };
    let per_node = par::map_indexed(n, |j| -> Result<Vec<(f64, u32, u32)>> {
        let mut best = vec![(f64::NEG_INFINITY, u32::MAX, u32::MAX); tpn];
        if !input.allowed(model, j) {
            return Ok(best);
        }
        let zp = input.placement(j);
        let mut f = vec![0.0; dims];
        let mut consider = |i: usize| -> Result<()> {
            if !input.allowed(model, i) {
                return Ok(());
            }
            let zc = input.placement(i);
            for tc in 0..tcn {
                let s = scores[tc][i];
                if s == f64::NEG_INFINITY {
                    continue;
                }
                for (tp, b) in best.iter_mut().enumerate() {
                    let e = model.edge(child, tc, tp);
                    psi_into(model.variant, model.reading, &zc, &zp, &e.anchor, &mut f)?;
                    let mut v = s + e.bias;
                    for k in 0..dims {
                        v += e.weights[k] * f[k];
                    }
                    if better(v, (i, tc), b.0, (b.1 as usize, b.2 as usize)) {
                        *b = (v, i as u32, tc as u32);
                    }
                }
            }
            Ok(())
        };
        match input.pairs {
            PairSet::Map(m) => {
                consider(j)?;
                for &(_, i) in m.neighbors(j) {
                    consider(i as usize)?;
                }
            }
            PairSet::All => {
                for &i in &valid {
                    consider(i)?;
                }
            }
        }
        Ok(best)
    });
    let mut val = vec![vec![f64::NEG_INFINITY; n]; tpn];
    let mut arg = vec![vec![(u32::MAX, u32::MAX); n]; tpn];
    for (j, best) in per_node.into_iter().enumerate() {
        for (tp, (v, i, t)) in best?.into_iter().enumerate() {
            val[tp][j] = v;
            arg[tp][j] = (i, t);
        }
    }
    Ok((val, arg))
}

/// Score tables of part `p` given its children's messages, children summed in id order.
fn part_scores(model: &PsModel, input: &LevelInput, p: usize, msgs: &[Option<Message>]) -> Vec<Vec<f64>> {
    let n = input.space.len();
    let children = model.children(p);
    (0..model.types[p])
        .map(|t| {
            (0..n)
                .map(|node| {
                    if !input.allowed(model, node) {
                        return f64::NEG_INFINITY;
                    }
                    let mut s = input.unary[p][t][node];
                    for &c in &children {
                        s += msgs[c].as_ref().expect("child message computed first").0[t][node];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// Runs the DP with the default schedule: all parts of equal height in parallel.
pub fn dp_level(model: &PsModel, input: &LevelInput) -> Result<LevelSolution> {
    dp_level_scheduled(model, input, &model.height_groups())
}

/// Runs the DP visiting `schedule` group by group; each group may only
/// depend on parts of earlier groups. The result does not depend on the schedule.
pub fn dp_level_scheduled(model: &PsModel, input: &LevelInput, schedule: &[Vec<usize>]) -> Result<LevelSolution> {
    let n = input.space.len();
    if n == 0 || (model.variant.is_3d() && model.num_parts() > 1 && input.space.valid_count() == 0) {
        return Err(Error::EmptyStateSpace);
    }
    if input.unary.len() != model.num_parts()
        || input.unary.iter().zip(&model.types).any(|(u, &t)| u.len() != t || u.iter().any(|x| x.len() != n))
    {
        return Err(Error::GridMismatch("unary tables do not match the model and state space".into()));
    }
    if model.variant == Variant::Psi2d {
        model.check_concave()?;
    }
    let root = model.root();
    let mut msgs: Vec<Option<Message>> = vec![None; model.num_parts()];
    for group in schedule {
        let done = par::map(group, |&c| -> Result<Option<Message>> {
            if c == root {
                return Ok(None);
            }
            let scores = part_scores(model, input, c, &msgs);
            let m = if model.variant == Variant::Psi2d {
                message_2d(model, input, c, &scores)?
            } else {
                message_3d(model, input, c, &scores)?
            };
            Ok(Some(m))
        });
        for (&c, m) in group.iter().zip(done) {
            if let Some(m) = m? {
                msgs[c] = Some(m);
            }
        }
    }
    let root_scores = part_scores(model, input, root, &msgs);
    let args = msgs.into_iter().map(|m| m.map(|m| m.1).unwrap_or_default()).collect();
    Ok(LevelSolution { root: root_scores, root_part: root, args })
}
