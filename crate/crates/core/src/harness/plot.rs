//! Static SVG scatter of a metric against mono size (log x).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::ResultRow;
use crate::error::{Error, IoContext, Result};

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
pub const MARGIN: f64 = 60.0;
/// Fraction of the data range added on each side of both axes.
pub const PAD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSpec {
    pub metric: String,
    /// Keep only rows translating into this language; points are then
    /// labelled by source language.
    pub target: Option<String>,
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span > 0.0 {
        (lo - PAD * span, hi + PAD * span)
    } else {
        let d = PAD * lo.abs().max(1.0);
        (lo - d, hi + d)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render the SVG text.
pub fn scatter_svg(rows: &[ResultRow], spec: &ScatterSpec) -> Result<String> {
    let points: Vec<(f64, f64, String)> = rows
        .iter()
        .filter(|r| r.metric == spec.metric && r.mono_size > 0)
        .filter(|r| spec.target.as_ref().map_or(true, |t| &r.tgt_lang == t))
        .map(|r| {
            let label = match spec.target {
                Some(_) => r.src_lang.clone(),
                None => format!("{}-{}", r.src_lang, r.tgt_lang),
            };
            ((r.mono_size as f64).log10(), r.value, label)
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyCorpus(format!("no {} rows with a mono size to plot", spec.metric)));
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&(f64, f64, String)) -> f64| points.iter().map(get).fold(init, f);
    let (x0, x1) = padded(fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let (y0, y1) = padded(fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" data-x-range="{x0:.6} {x1:.6}" data-y-range="{y0:.6} {y1:.6}" stroke="black" fill="none">"#
    );
    let _ = writeln!(s, r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}"/>"#);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">mono sentences (log10)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        esc(&spec.metric)
    );
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{:.0}</text>"#, sx(v), HEIGHT - MARGIN + 16.0, 10f64.powf(v));
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, MARGIN - 4.0, sy(v) + 4.0);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="points" font-family="sans-serif" font-size="11">"#);
    for (x, y, label) in &points {
        let (cx, cy) = (sx(*x), sy(*y));
        let _ = writeln!(s, r#"<circle class="pt" cx="{cx:.2}" cy="{cy:.2}" r="4" fill="steelblue"/>"#);
        let _ = writeln!(s, r#"<text class="label" x="{:.2}" y="{:.2}">{}</text>"#, cx + 6.0, cy - 6.0, esc(label));
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

/// Write the scatter plot to `out`.
pub fn plot_scatter(rows: &[ResultRow], spec: &ScatterSpec, out: &Path) -> Result<()> {
    let svg = scatter_svg(rows, spec)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(out, svg).at(out)
}
