//! Generalized distance transform for concave quadratic deformation scores.
//!
//! For a child score table `f` the message at parent cell `p` is
//! `max_q f[q] + wl * t + ws * t^2` with `t = q - p - a` per axis. The upper
//! envelope of the parabolas `f[q] + ...` is built once per row or column, so
//! each pass is linear in the table size. Ties go to the lowest index.

use crate::error::{Error, Result};

/// One axis of a separable deformation: linear weight, squared weight (< 0) and anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub lin: f64,
    pub sq: f64,
    pub anchor: f64,
}

impl Quadratic {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.lin * t + self.sq * t * t
    }
}

/// `out[p] = max_q f[q] + k.eval(q - p - k.anchor)`, with the maximizing `q`
/// (or `usize::MAX` when every entry of `f` is `-inf`). Scratch buffers are reused.
pub fn gdt_1d(f: &[f64], k: Quadratic, out: &mut [f64], arg: &mut [usize], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    let a = -k.sq;
    v.clear();
    z.clear();
    for q in 0..n {
        if f[q] == f64::NEG_INFINITY {
            continue;
        }
        loop {
            let Some(&top) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let (q1, q2) = (top as f64, q as f64);
            let s = (q1 + q2) / 2.0 - ((f[q] - f[top]) / (q2 - q1) + k.lin) / (2.0 * a);
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::NEG_INFINITY);
        arg.fill(usize::MAX);
        return;
    }
    let mut j = 0;
    for p in 0..out.len() {
        let x = p as f64 + k.anchor;
        while j + 1 < v.len() && z[j + 1] < x {
            j += 1;
        }
        let q = v[j];
        out[p] = f[q] + k.eval(q as f64 - x);
        arg[p] = q;
    }
}

/// Message of a `w x h` child table (row-major) for the 2D feature `[dc, dc^2, dr, dr^2]`
/// with weights `w` and anchor `(ac, ar)`. Returns the max table and, per
/// parent cell, the row-major index of the maximizing child cell. Values are
/// recomputed exactly at the argmax.
pub fn gdt_message(
    table: &[f64],
    width: usize,
    height: usize,
    weights: &[f64; 4],
    anchor: (f64, f64),
) -> Result<(Vec<f64>, Vec<usize>)> {
    if !(weights[1] < 0.0 && weights[3] < 0.0) {
        return Err(Error::NonConcaveDeformation(weights[1], weights[3]));
    }
    assert_eq!(table.len(), width * height);
    let kx = Quadratic { lin: weights[0], sq: weights[1], anchor: anchor.0 };
    let ky = Quadratic { lin: weights[2], sq: weights[3], anchor: anchor.1 };
    let (mut v, mut z) = (Vec::new(), Vec::new());
    let mut rows_val = vec![0.0; width * height];
    let mut rows_arg = vec![0usize; width * height];
    for r in 0..height {
        let span = r * width..(r + 1) * width;
        gdt_1d(&table[span.clone()], kx, &mut rows_val[span.clone()], &mut rows_arg[span], &mut v, &mut z);
    }
    let mut col = vec![0.0; height];
    let (mut cval, mut carg) = (vec![0.0; height], vec![0usize; height]);
    let mut out = vec![f64::NEG_INFINITY; width * height];
    let mut arg = vec![usize::MAX; width * height];
    for c in 0..width {
        for r in 0..height {
            col[r] = rows_val[r * width + c];
        }
        gdt_1d(&col, ky, &mut cval, &mut carg, &mut v, &mut z);
        for r in 0..height {
            let qr = carg[r];
            if qr == usize::MAX {
                continue;
            }
            let qc = rows_arg[qr * width + c];
            let i = qr * width + qc;
            let dc = qc as f64 - c as f64 - anchor.0;
            let dr = qr as f64 - r as f64 - anchor.1;
            out[r * width + c] = table[i] + weights[0] * dc + weights[1] * dc * dc + weights[2] * dr + weights[3] * dr * dr;
            arg[r * width + c] = i;
        }
    }
    Ok((out, arg))
}
