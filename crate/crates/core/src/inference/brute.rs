//! Reference solvers: quadratic DP over all state pairs and full enumeration.

use super::dp::{configuration_score, Assignment, LevelInput};
use crate::error::{Error, Result};
use crate::model::{pairwise_score, PsModel};

/// Default cap on the total number of (state, type) pairs.
pub const DEFAULT_BUDGET: usize = 20_000;

fn pair_allowed(model: &PsModel, input: &LevelInput, i: usize, j: usize, max_dist: Option<f64>) -> bool {
    if !model.variant.is_3d() {
        return true;
    }
    let (a, b) = (&input.space.nodes[i], &input.space.nodes[j]);
    match (a.point, b.point, max_dist) {
        (Some(p), Some(q), Some(d)) => p.distance(q) < d,
        (Some(_), Some(_), None) => true,
        _ => false,
    }
}

fn check_budget(model: &PsModel, input: &LevelInput, budget: usize) -> Result<()> {
    let size: usize = model.types.iter().map(|t| t * input.space.len()).sum();
    if size > budget {
        return Err(Error::InstanceTooLarge { size, budget });
    }
    if input.space.is_empty() {
        return Err(Error::EmptyStateSpace);
    }
    Ok(())
}

/// Exact optimum by a DP that scores every child/parent pair directly.
/// With `max_dist`, 3D pairs at or beyond that distance are excluded.
/// Ties go to the lowest (node, type).
pub fn brute_force_infer(model: &PsModel, input: &LevelInput, max_dist: Option<f64>, budget: usize) -> Result<(f64, Assignment)> {
    check_budget(model, input, budget)?;
    let n = input.space.len();
    let np = model.num_parts();
    let mut table: Vec<Vec<Vec<f64>>> = (0..np)
        .map(|p| {
            (0..model.types[p])
                .map(|t| (0..n).map(|i| if input.allowed(model, i) { input.unary[p][t][i] } else { f64::NEG_INFINITY }).collect())
                .collect()
        })
        .collect();
    let mut best_child: Vec<Vec<Vec<(usize, usize)>>> = vec![Vec::new(); np];
    for c in model.leaves_first() {
        let Some(p) = model.parts[c].parent else { continue };
        let mut arg = vec![vec![(usize::MAX, usize::MAX); n]; model.types[p]];
        for tp in 0..model.types[p] {
            for j in 0..n {
                let mut best = f64::NEG_INFINITY;
                for i in 0..n {
                    if !pair_allowed(model, input, i, j, max_dist) {
                        continue;
                    }
                    for tc in 0..model.types[c] {
                        let s = table[c][tc][i];
                        if s == f64::NEG_INFINITY {
                            continue;
                        }
                        let v = s + pairwise_score(model, c, tc, tp, &input.placement(i), &input.placement(j))?;
                        if v > best {
                            best = v;
                            arg[tp][j] = (i, tc);
                        }
                    }
                }
                table[p][tp][j] += best;
            }
        }
        best_child[c] = arg;
    }
    let root = model.root();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for node in 0..n {
        for t in 0..model.types[root] {
            if table[root][t][node] > best.0 {
                best = (table[root][t][node], node, t);
            }
        }
    }
    if best.0 == f64::NEG_INFINITY {
        return Err(Error::EmptyStateSpace);
    }
    let mut a = vec![(usize::MAX, usize::MAX); np];
    a[root] = (best.1, best.2);
    for p in model.leaves_first().into_iter().rev() {
        for c in model.children(p) {
            let (pn, pt) = a[p];
            a[c] = best_child[c][pt][pn];
        }
    }
    Ok((best.0, a))
}

/// Enumerates every configuration. Only for tiny instances (at most 8 states and 3 parts).
pub fn enumerate_infer(model: &PsModel, input: &LevelInput, max_dist: Option<f64>) -> Result<(f64, Assignment)> {
    let n = input.space.len();
    let np = model.num_parts();
    if n > 8 || np > 3 {
        return Err(Error::InstanceTooLarge { size: n.max(np), budget: 8 });
    }
    let radix: Vec<usize> = model.types.iter().map(|t| t * n).collect();
    let total: usize = radix.iter().product();
    let mut best: Option<(f64, Assignment)> = None;
    'outer: for code in 0..total {
        let mut rest = code;
        let mut a = Vec::with_capacity(np);
        for &r in &radix {
            let s = rest % r;
            rest /= r;
            a.push((s % n, s / n));
        }
        for (p, &(node, _)) in a.iter().enumerate() {
            if !input.allowed(model, node) {
                continue 'outer;
            }
            if let Some(q) = model.parts[p].parent {
                if !pair_allowed(model, input, node, a[q].0, max_dist) {
                    continue 'outer;
                }
            }
        }
        let s = configuration_score(model, input, &a)?;
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, a));
        }
    }
    best.ok_or(Error::EmptyStateSpace)
}
