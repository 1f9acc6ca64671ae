//! Plain SVG plots: the fitness history of a calibration run and per-feature
//! histogram overlays of hardware against simulated data.
//!
//! Output depends only on the inputs (no timestamps, fixed number
//! formatting), so identical runs produce identical files.

use std::fmt::Write as _;

use crate::rollout::FeatureMatrix;
use crate::{Error, Result};

const HW_COLOR: &str = "#1f77b4";
const SIM_COLOR: &str = "#d62728";

/// One row of a fitness history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryPoint {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// Parses the `generation,best,mean,step_size` CSV written by calibration.
pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryPoint>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let bad = |m: &str| Error::InvalidArgument(format!("history line {}: {m}", i + 1));
        if cells.len() < 3 {
            return Err(bad("expected at least 3 columns"));
        }
        out.push(HistoryPoint {
            generation: cells[0].trim().parse().map_err(|_| bad("bad generation"))?,
            best: cells[1].trim().parse().map_err(|_| bad("bad best"))?,
            mean: cells[2].trim().parse().map_err(|_| bad("bad mean"))?,
        });
    }
    Ok(out)
}

fn svg_open(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Line plot of best-so-far and generation-mean fitness on a log scale.
/// Non-positive or non-finite values are left out of the lines.
pub fn fitness_history_svg(history: &[HistoryPoint]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let logs: Vec<f64> = history
        .iter()
        .flat_map(|p| [p.best, p.mean])
        .filter(|v| v.is_finite() && *v > 0.0)
        .map(f64::log10)
        .collect();
    let (mut lo, mut hi) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let g_max = history.iter().map(|p| p.generation).max().unwrap_or(0).max(1) as f64;
    let x_of = |g: usize| left + pw * g as f64 / g_max;
    let y_of = |v: f64| top + ph * (1.0 - (v.log10() - lo) / (hi - lo));

    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">Fitness history</text>"#, w / 2.0);
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for d in (lo as i64)..=(hi as i64) {
        let y = top + ph * (1.0 - (d as f64 - lo) / (hi - lo));
        let _ = writeln!(out, r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11">1e{d}</text>"#, left - 6.0, y + 4.0);
    }
    for k in 0..=4 {
        let g = (g_max * k as f64 / 4.0).round();
        let x = left + pw * g / g_max;
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-size="11">{g}</text>"#, top + ph + 16.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">generation</text>"#, left + pw / 2.0, h - 10.0);
    let line = |f: fn(&HistoryPoint) -> f64| -> Vec<(f64, f64)> {
        history
            .iter()
            .filter(|p| f(p).is_finite() && f(p) > 0.0)
            .map(|p| (x_of(p.generation), y_of(f(p))))
            .collect()
    };
    polyline(&mut out, &line(|p| p.mean), SIM_COLOR);
    polyline(&mut out, &line(|p| p.best), HW_COLOR);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" fill="{HW_COLOR}">best</text>"#, left + pw - 60.0, top + 16.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="11" fill="{SIM_COLOR}">mean</text>"#, left + pw - 60.0, top + 30.0);
    out.push_str("</svg>\n");
    out
}

/// Normalized histogram counts of `values` over `[lo, hi]`.
fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    let mut total = 0.0;
    let width = (hi - lo) / bins as f64;
    for v in values {
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { bins / 2 };
        counts[k] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

/// Grid of per-feature histograms, hardware in blue and simulation in red,
/// each normalized to unit mass over a shared per-feature range.
pub fn histogram_overlay_svg(
    hardware: &[FeatureMatrix],
    simulated: &[FeatureMatrix],
    names: &[String],
    bins: usize,
) -> Result<String> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let cols = names.len();
    if let Some(m) = hardware.iter().chain(simulated).find(|m| m.cols() != cols) {
        return Err(Error::Dimension(format!("feature matrix has {} columns, expected {cols}", m.cols())));
    }
    let grid = (cols as f64).sqrt().ceil().max(1.0) as usize;
    let (cell_w, cell_h) = (180.0, 120.0);
    let (pad, title_h) = (8.0, 14.0);
    let w = grid as f64 * cell_w;
    let h = cols.div_ceil(grid) as f64 * cell_h + 24.0;

    let mut out = String::new();
    svg_open(&mut out, w, h);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="16" text-anchor="middle" font-size="13"><tspan fill="{HW_COLOR}">hardware</tspan> vs <tspan fill="{SIM_COLOR}">simulation</tspan></text>"#,
        w / 2.0
    );
    for (c, name) in names.iter().enumerate() {
        let column = |ms: &[FeatureMatrix]| -> Vec<f64> { ms.iter().flat_map(|m| m.column(c)).collect() };
        let (hw, sim) = (column(hardware), column(simulated));
        let (lo, hi) = hw
            .iter()
            .chain(&sim)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let hw_h = histogram(hw.into_iter(), lo, hi, bins);
        let sim_h = histogram(sim.into_iter(), lo, hi, bins);
        let peak = hw_h.iter().chain(&sim_h).copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

        let x0 = (c % grid) as f64 * cell_w + pad;
        let y0 = (c / grid) as f64 * cell_h + 24.0;
        let (pw, ph) = (cell_w - 2.0 * pad, cell_h - 2.0 * pad - title_h);
        let base = y0 + title_h + ph;
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" font-size="10">{name}</text>"#, x0, y0 + 10.0);
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#999"/>"##,
            y0 + title_h
        );
        let bw = pw / bins as f64;
        for (hist, color) in [(&hw_h, HW_COLOR), (&sim_h, SIM_COLOR)] {
            for (k, v) in hist.iter().enumerate().filter(|(_, v)| **v > 0.0) {
                let bh = ph * v / peak;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{bh:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                    x0 + k as f64 * bw,
                    base - bh
                );
            }
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
