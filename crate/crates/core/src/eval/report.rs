//! Plain-text result tables and SVG precision-recall plots.

use std::fmt::Write;

use super::{ApMode, ApResult, PckResult};
use crate::frame::JOINT_NAMES;

/// Rows are body parts (plus the average), one column per named result, in percent.
pub fn pck_table(columns: &[(String, PckResult)]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<16}", "part");
    for (name, _) in columns {
        let _ = write!(s, " {name:>18}");
    }
    s.push('\n');
    for (j, part) in JOINT_NAMES.iter().enumerate() {
        let _ = write!(s, "{part:<16}");
        for (_, r) in columns {
            let _ = write!(s, " {:>18.1}", 100.0 * r.per_part[j]);
        }
        s.push('\n');
    }
    let _ = write!(s, "{:<16}", "average");
    for (_, r) in columns {
        let _ = write!(s, " {:>18.1}", 100.0 * r.average);
    }
    s.push('\n');
    s
}

/// One row per named model with its AP in both modes, in percent.
pub fn ap_table(rows: &[(String, ApResult, ApResult)]) -> String {
    let mut s = format!("{:<24} {:>8} {:>8}\n", "model", ApMode::Normal.label(), ApMode::All.label());
    for (name, n, nd) in rows {
        let _ = writeln!(s, "{name:<24} {:>8.1} {:>8.1}", 100.0 * n.ap, 100.0 * nd.ap);
    }
    s
}

/// Precision-recall curves drawn as polylines on a unit square.
pub fn pr_curve_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let (w, h, m) = (480.0, 400.0, 50.0);
    let px = |r: f64| m + r * (w - 2.0 * m);
    let py = |p: f64| h - m - p * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * m,
        h - 2.0 * m
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#, px(t), h - m + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t}</text>"#, m - 6.0, py(t) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">recall</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">precision</text>"#, h / 2.0, h / 2.0);
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut path = String::new();
        for &(r, p) in pts {
            let _ = write!(path, "{:.2},{:.2} ", px(r), py(p));
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.trim_end());
        let ly = m + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, w - m - 8.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
