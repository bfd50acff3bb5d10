// SPDX-License-Identifier: MIT OR Apache-2.0

//! Static SVG plots for coefficient tables, dose-response deltas, projection
//! distributions, and compliance cross-tabs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::scale::format_number;
use crate::stats::{Coefficient, Z95};
use crate::tables::{self, parse_f64, read_table, Provenance, Table};

labeled_enum! {
    PlotKind {
        Coefficients => "coefficients",
        DoseResponse => "dose_response",
        ProjectionViolin => "projection_violin",
        Compliance => "compliance",
    }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(v: f64) -> String {
    format!("{v:.2}")
}

struct Canvas {
    body: String,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(title: &str, width: f64, height: f64) -> Self {
        let mut c = Canvas {
            body: String::new(),
            width,
            height,
        };
        c.text(width / 2.0, 24.0, title, "middle", 15.0);
        c
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, w: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="{w}"/>"#,
            num(x1), num(y1), num(x2), num(y2)
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(self.body, r#"<circle cx="{}" cy="{}" r="{r}" fill="{color}"/>"#, num(x), num(y));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{color}"/>"#,
            num(x), num(y), num(w.max(0.0)), num(h.max(0.0))
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str, fill: Option<&str>) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{},{}", num(*x), num(*y))).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="{}" fill-opacity="0.4" stroke="{color}" stroke-width="1.5"/>"#,
            p.join(" "),
            fill.unwrap_or("none")
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, anchor: &str, size: f64) {
        let _ = writeln!(
            self.body,
            r#"<text x="{}" y="{}" text-anchor="{anchor}" font-size="{size}" font-family="sans-serif">{}</text>"#,
            num(x), num(y), escape(s)
        );
    }

    fn finish(self, provenance: Option<&Provenance>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = self.width,
            h = self.height
        );
        if let Some(p) = provenance {
            let _ = writeln!(out, "<!-- {} -->", escape(&p.comment()));
        }
        out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        out.push('\n');
        out.push_str(&self.body);
        out.push_str("</svg>\n");
        out
    }
}

/// Maps a data interval onto a pixel interval, padding degenerate ranges.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(values: impl IntoIterator<Item = f64>, p0: f64, p1: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            lo -= pad;
            hi += pad;
        }
        let pad = (hi - lo) * 0.05;
        Axis { lo: lo - pad, hi: hi + pad, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn frame(c: &mut Canvas, y: Axis, y_label: &str) {
    c.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "black", 1.0);
    c.line(MARGIN, HEIGHT - MARGIN, c.width - MARGIN / 2.0, HEIGHT - MARGIN, "black", 1.0);
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let py = y.map(v);
        c.line(MARGIN - 4.0, py, MARGIN, py, "black", 1.0);
        c.text(MARGIN - 6.0, py + 4.0, &format!("{v:.3}"), "end", 10.0);
    }
    if y.lo < 0.0 && y.hi > 0.0 {
        let z = y.map(0.0);
        c.line(MARGIN, z, c.width - MARGIN / 2.0, z, "#999999", 0.8);
    }
    c.text(14.0, HEIGHT / 2.0, y_label, "start", 11.0);
}

/// Point estimates with ±1.96·SE bars, one row per coefficient.
pub fn coefficients_svg(title: &str, coefs: &[Coefficient], provenance: Option<&Provenance>) -> String {
    let row_h = 24.0;
    let height = 2.0 * MARGIN + row_h * coefs.len().max(1) as f64;
    let left = 220.0;
    let mut c = Canvas::new(title, WIDTH, height);
    let x = Axis::new(
        coefs.iter().flat_map(|k| [k.estimate - Z95 * k.se, k.estimate + Z95 * k.se, 0.0]),
        left,
        WIDTH - MARGIN / 2.0,
    );
    let zero = x.map(0.0);
    c.line(zero, MARGIN - 10.0, zero, height - MARGIN + 10.0, "#999999", 0.8);
    for (i, k) in coefs.iter().enumerate() {
        let y = MARGIN + row_h * (i as f64 + 0.5);
        c.text(left - 8.0, y + 4.0, &k.name, "end", 11.0);
        c.line(x.map(k.estimate - Z95 * k.se), y, x.map(k.estimate + Z95 * k.se), y, PALETTE[0], 2.0);
        c.circle(x.map(k.estimate), y, 3.5, PALETTE[0]);
    }
    for k in 0..=4 {
        let v = x.lo + (x.hi - x.lo) * k as f64 / 4.0;
        c.text(x.map(v), height - MARGIN + 28.0, &format!("{v:.3}"), "middle", 10.0);
    }
    c.finish(provenance)
}

/// One series of a dose-response panel.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Deltas against scale, one polyline with markers per series.
pub fn dose_response_svg(title: &str, y_label: &str, series: &[Series], provenance: Option<&Provenance>) -> String {
    let mut c = Canvas::new(title, WIDTH, HEIGHT);
    let scales: BTreeSet<String> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| format_number(p.0)))
        .collect();
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let x = if scales.len() <= 1 {
        // a single scale sits in the middle of the axis
        let v = xs.first().copied().unwrap_or(0.0);
        Axis { lo: v - 1.0, hi: v + 1.0, p0: MARGIN, p1: WIDTH - MARGIN }
    } else {
        Axis::new(xs.iter().copied(), MARGIN, WIDTH - MARGIN)
    };
    let y = Axis::new(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).chain([0.0]), HEIGHT - MARGIN, MARGIN);
    frame(&mut c, y, y_label);
    let mut seen = BTreeSet::new();
    for s in series {
        for p in &s.points {
            if seen.insert(format_number(p.0)) {
                c.text(x.map(p.0), HEIGHT - MARGIN + 16.0, &format_number(p.0), "middle", 10.0);
            }
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().map(|p| (x.map(p.0), y.map(p.1))).collect();
        if pts.len() > 1 {
            c.polyline(&pts, color, None);
        }
        for (px, py) in &pts {
            c.circle(*px, *py, 3.5, color);
        }
        c.text(WIDTH - MARGIN, MARGIN + 14.0 * i as f64, &s.name, "end", 11.0);
        c.circle(WIDTH - MARGIN + 8.0, MARGIN - 4.0 + 14.0 * i as f64, 3.5, color);
    }
    c.text(WIDTH / 2.0, HEIGHT - 12.0, "steering scale", "middle", 11.0);
    c.finish(provenance)
}

/// Gaussian-kernel density outlines per group (Silverman bandwidth).
pub fn violin_svg(title: &str, groups: &BTreeMap<String, Vec<f64>>, provenance: Option<&Provenance>) -> String {
    let mut c = Canvas::new(title, WIDTH.max(120.0 * groups.len() as f64), HEIGHT);
    let y = Axis::new(groups.values().flatten().copied(), HEIGHT - MARGIN, MARGIN);
    frame(&mut c, y, "centered projection");
    let slot = (c.width - 1.5 * MARGIN) / groups.len().max(1) as f64;
    for (i, (name, values)) in groups.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let color = PALETTE[i % PALETTE.len()];
        c.text(cx, HEIGHT - MARGIN + 16.0, name, "middle", 10.0);
        if values.is_empty() {
            continue;
        }
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        if sd == 0.0 {
            c.line(cx - slot * 0.4, y.map(m), cx + slot * 0.4, y.map(m), color, 2.0);
            continue;
        }
        let bw = 1.06 * sd * n.powf(-0.2);
        let grid: Vec<f64> = (0..=60).map(|k| y.lo + (y.hi - y.lo) * k as f64 / 60.0).collect();
        let dens: Vec<f64> = grid
            .iter()
            .map(|g| values.iter().map(|v| (-0.5 * ((g - v) / bw).powi(2)).exp()).sum::<f64>())
            .collect();
        let peak = dens.iter().copied().fold(0.0, f64::max);
        let half = slot * 0.4;
        let mut pts: Vec<(f64, f64)> = grid.iter().zip(&dens).map(|(g, d)| (cx + half * d / peak, y.map(*g))).collect();
        pts.extend(grid.iter().zip(&dens).rev().map(|(g, d)| (cx - half * d / peak, y.map(*g))));
        pts.push(pts[0]);
        c.polyline(&pts, color, Some(color));
        c.line(cx - half * 0.3, y.map(m), cx + half * 0.3, y.map(m), "black", 1.5);
    }
    c.finish(provenance)
}

/// Grouped bars of noncompliance rate by scale (groups) and source (bars).
pub fn compliance_svg(
    title: &str,
    cells: &BTreeMap<(String, String), (usize, usize)>,
    scale_order: &[String],
    provenance: Option<&Provenance>,
) -> String {
    let mut c = Canvas::new(title, WIDTH, HEIGHT);
    let sources: Vec<String> = cells.keys().map(|k| k.1.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let y = Axis { lo: 0.0, hi: 1.0, p0: HEIGHT - MARGIN, p1: MARGIN };
    frame(&mut c, y, "noncompliance rate");
    let group_w = (WIDTH - 1.5 * MARGIN) / scale_order.len().max(1) as f64;
    let bar_w = group_w * 0.8 / sources.len().max(1) as f64;
    for (g, scale) in scale_order.iter().enumerate() {
        let gx = MARGIN + group_w * g as f64 + group_w * 0.1;
        c.text(gx + group_w * 0.4, HEIGHT - MARGIN + 16.0, scale, "middle", 10.0);
        for (b, source) in sources.iter().enumerate() {
            let Some(&(bad, total)) = cells.get(&(scale.clone(), source.clone())) else { continue };
            let rate = if total == 0 { 0.0 } else { bad as f64 / total as f64 };
            let x = gx + bar_w * b as f64;
            c.rect(x, y.map(rate), bar_w * 0.9, y.map(0.0) - y.map(rate), PALETTE[b % PALETTE.len()]);
            c.text(x + bar_w * 0.45, y.map(rate) - 3.0, &format!("{bad}/{total}"), "middle", 9.0);
        }
    }
    for (b, source) in sources.iter().enumerate() {
        c.rect(WIDTH - MARGIN - 90.0, MARGIN + 14.0 * b as f64 - 8.0, 8.0, 8.0, PALETTE[b % PALETTE.len()]);
        c.text(WIDTH - MARGIN - 78.0, MARGIN + 14.0 * b as f64, source, "start", 10.0);
    }
    c.text(WIDTH / 2.0, HEIGHT - 12.0, "steering scale", "middle", 11.0);
    c.finish(provenance)
}

fn require_file(dir: &Path, name: &str, kind: PlotKind) -> Result<Table> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(LabError::Invalid(format!("{kind} plot needs {}", path.display())));
    }
    read_table(&path)
}

fn opt_f64(cell: &str) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(cell).map(Some)
    }
}

pub fn read_coefficients(table: &Table) -> Result<Vec<Coefficient>> {
    let idx = table.require(&crate::stats::COEFFICIENT_HEADER)?;
    table
        .rows
        .iter()
        .map(|r| {
            Ok(Coefficient {
                name: r[idx[0]].clone(),
                estimate: parse_f64(&r[idx[1]])?,
                se: parse_f64(&r[idx[2]])?,
                low95: parse_f64(&r[idx[3]])?,
                high95: parse_f64(&r[idx[4]])?,
            })
        })
        .collect()
}

/// Renders each requested kind from the tables in `dir` into `dir/plots`.
pub fn emit_plots(dir: &Path, kinds: &[PlotKind], provenance: Option<&Provenance>) -> Result<Vec<PathBuf>> {
    let mut rendered: Vec<(String, String)> = Vec::new();
    for &kind in kinds {
        match kind {
            PlotKind::Coefficients => {
                let mut files: Vec<PathBuf> = fs::read_dir(dir)
                    .map_err(|e| LabError::io(dir, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("coefficients") && n.ends_with(".csv"))
                    })
                    .collect();
                files.sort();
                if files.is_empty() {
                    return Err(LabError::Invalid(format!(
                        "coefficients plot needs a coefficients*.csv table in {}",
                        dir.display()
                    )));
                }
                for f in files {
                    let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("coefficients").to_string();
                    let coefs = read_coefficients(&read_table(&f)?)?;
                    rendered.push((format!("{stem}.svg"), coefficients_svg(&stem, &coefs, provenance)));
                }
            }
            PlotKind::DoseResponse => {
                let t = require_file(dir, "deltas.csv", kind)?;
                let idx = t.require(&crate::steering::DELTA_HEADER)?;
                for (quantity, mean_col, median_col) in [("wager", 3, 5), ("risk", 4, 6)] {
                    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
                    for r in &t.rows {
                        let scale = parse_f64(&r[idx[0]])?;
                        for (stat, col) in [("mean", mean_col), ("median", median_col)] {
                            if let Some(v) = opt_f64(&r[idx[col]])? {
                                series.entry(format!("{} {stat}", r[idx[1]])).or_default().push((scale, v));
                            }
                        }
                    }
                    let series: Vec<Series> = series
                        .into_iter()
                        .map(|(name, mut points)| {
                            points.sort_by(|a, b| a.0.total_cmp(&b.0));
                            Series { name, points }
                        })
                        .collect();
                    rendered.push((
                        format!("dose_response_{quantity}.svg"),
                        dose_response_svg(
                            &format!("{quantity} delta vs in-run scale 0"),
                            &format!("{quantity} delta"),
                            &series,
                            provenance,
                        ),
                    ));
                }
            }
            PlotKind::ProjectionViolin => {
                let t = require_file(dir, "projections.csv", kind)?;
                let idx = t.require(&["split", "role", "centered"])?;
                let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for r in &t.rows {
                    groups
                        .entry(format!("{} {}", r[idx[0]], r[idx[1]]))
                        .or_default()
                        .push(parse_f64(&r[idx[2]])?);
                }
                rendered.push((
                    "projection_violin.svg".into(),
                    violin_svg("projection by split, centered within split", &groups, provenance),
                ));
            }
            PlotKind::Compliance => {
                let t = require_file(dir, "compliance.csv", kind)?;
                let idx = t.require(&crate::behavior::COMPLIANCE_HEADER)?;
                let mut cells = BTreeMap::new();
                let mut scales: Vec<(f64, String)> = Vec::new();
                for r in &t.rows {
                    let parse_n = |s: &str| {
                        s.trim().parse::<usize>().map_err(|_| LabError::Invalid(format!("not a count: {s:?}")))
                    };
                    let label = r[idx[0]].trim().to_string();
                    let v = parse_f64(&label)?;
                    if !scales.iter().any(|s| s.1 == label) {
                        scales.push((v, label.clone()));
                    }
                    cells.insert((label, r[idx[1]].clone()), (parse_n(&r[idx[2]])?, parse_n(&r[idx[3]])?));
                }
                scales.sort_by(|a, b| a.0.total_cmp(&b.0));
                let order: Vec<String> = scales.into_iter().map(|s| s.1).collect();
                rendered.push((
                    "compliance.svg".into(),
                    compliance_svg("noncompliance by steering scale and prompt source", &cells, &order, provenance),
                ));
            }
        }
    }
    let mut written = Vec::new();
    for (name, svg) in rendered {
        let path = dir.join("plots").join(name);
        tables::write_bytes(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
