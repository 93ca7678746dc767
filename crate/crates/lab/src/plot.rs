//! Minimal SVG line plots of result CSVs over a log-σ axis.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LabError, LabResult};
use crate::io::{parse, read_table};

/// Value column candidates, in order of preference.
const VALUE_COLUMNS: [&str; 4] = ["value", "acc_test", "acc_ensemble", "acc_shared"];
/// Columns naming the series a row belongs to.
const TAG_COLUMNS: [&str; 2] = ["estimator", "probe_kind"];

const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct PlotStyle {
    pub width: f64,
    pub height: f64,
    pub title: Option<String>,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self { width: 640.0, height: 420.0, title: None }
    }
}

/// Series of one CSV: rows grouped by tag (and seed when several appear).
pub fn read_series(path: &Path) -> LabResult<Vec<Series>> {
    let (header, rows) = read_table(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let sigma = col("sigma")
        .or_else(|| col("center_sigma"))
        .ok_or_else(|| LabError::SchemaMismatch(format!("{}: no sigma column", path.display())))?;
    let value = VALUE_COLUMNS
        .iter()
        .find_map(|c| col(c))
        .ok_or_else(|| LabError::SchemaMismatch(format!("{}: no value column", path.display())))?;
    if rows.is_empty() {
        return Err(LabError::SchemaMismatch(format!("{}: no data rows", path.display())));
    }
    let tag = TAG_COLUMNS.iter().find_map(|c| col(c));
    let seed = col("seed");
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
    let seeds: std::collections::BTreeSet<&str> = seed.map(|s| rows.iter().map(|r| r[s].as_str()).collect()).unwrap_or_default();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut order = Vec::new();
    for row in &rows {
        let mut label = tag.map_or_else(|| format!("{} ({})", stem, header[value]), |t| row[t].clone());
        if let (Some(s), true) = (seed, seeds.len() > 1) {
            label = format!("{label} seed {}", row[s]);
        }
        if !groups.contains_key(&label) {
            order.push(label.clone());
        }
        groups.entry(label).or_default().push((parse(&row[sigma])?, parse(&row[value])?));
    }
    Ok(order
        .into_iter()
        .map(|label| {
            let points = groups.remove(&label).unwrap_or_default();
            Series { label, points }
        })
        .collect())
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

/// Render series to SVG text. σ must be positive; it is drawn on a log axis.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> LabResult<String> {
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.is_empty() {
        return Err(LabError::SchemaMismatch("nothing to plot".into()));
    }
    if pts.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(LabError::SchemaMismatch("sigma must be positive and values finite".into()));
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(s, v) in &pts {
        x0 = x0.min(s.log10());
        x1 = x1.max(s.log10());
        y0 = y0.min(v);
        y1 = y1.max(v);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (w, h) = (style.width, style.height);
    let (left, right, top, bottom) = (60.0, 170.0, 30.0, 45.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |s: f64| left + (s.log10() - x0) / (x1 - x0) * pw;
    let sy = |v: f64| top + (1.0 - (v - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if let Some(t) = &style.title {
        let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, left + pw / 2.0, escape(t));
    }
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for e in (x0.ceil() as i32)..=(x1.floor() as i32) {
        let x = sx(10f64.powi(e));
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##, top + ph);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{e}</text>"#, top + ph + 14.0);
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(svg, r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#eee"/>"##, left + pw);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 4.0, y + 4.0, format_tick(t));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">σ (log scale)</text>"#, left + pw / 2.0, h - 8.0);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = sorted.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
        let ly = top + 12.0 + 16.0 * i as f64;
        let lx = left + pw + 10.0;
        let _ = writeln!(svg, r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#, lx + 18.0, lx + 22.0, ly + 4.0, escape(&s.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn format_tick(t: f64) -> String {
    let s = format!("{t:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Plot every series of every CSV into one SVG file.
pub fn plot_curves(inputs: &[impl AsRef<Path>], out: &Path, style: &PlotStyle) -> LabResult<()> {
    let mut series = Vec::new();
    for p in inputs {
        series.extend(read_series(p.as_ref())?);
    }
    let svg = render_svg(&series, style)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(out, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_curves, write_table, CURVE_HEADER};
    use molrg_core::metrics::{CurveMeta, Estimator, SnrCurve};
    use molrg_core::schedule::STANDARD_GRID;

    fn curve(est: Estimator) -> SnrCurve {
        let values: Vec<f64> = (0..9).map(|i| 1.0 + (i as f64 - 4.0).powi(2)).collect();
        SnrCurve::from_values(&STANDARD_GRID, &values, est, CurveMeta::default()).unwrap()
    }

    #[test]
    fn one_curve_gives_one_polyline_with_nine_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("a.csv");
        write_curves(&csv, &[&curve(Estimator::ClosedForm)]).unwrap();
        let svg_path = dir.path().join("a.svg");
        plot_curves(&[&csv], &svg_path, &PlotStyle::default()).unwrap();
        let svg = std::fs::read_to_string(svg_path).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split(' ').count(), 9);
    }

    #[test]
    fn two_curves_give_two_polylines_and_legend_entries() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_curves(&a, &[&curve(Estimator::ClosedForm)]).unwrap();
        write_curves(&b, &[&curve(Estimator::EmpiricalExact)]).unwrap();
        let out = dir.path().join("p.svg");
        plot_curves(&[&a, &b], &out, &PlotStyle::default()).unwrap();
        let svg = std::fs::read_to_string(out).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"legend\"").count(), 2);
        assert!(svg.contains("closed-form") && svg.contains("empirical-exact"));
    }

    #[test]
    fn empty_csv_is_a_schema_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_table(&p, &CURVE_HEADER, &[]).unwrap();
        let r = plot_curves(&[&p], &dir.path().join("e.svg"), &PlotStyle::default());
        assert!(matches!(r, Err(LabError::SchemaMismatch(_))));
        std::fs::write(&p, "").unwrap();
        assert!(matches!(read_series(&p), Err(LabError::SchemaMismatch(_)) | Err(LabError::Csv(_))));
    }

    #[test]
    fn missing_sigma_column_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_table(&p, &["epoch", "loss"], &[vec!["1".into(), "2".into()]]).unwrap();
        assert!(matches!(read_series(&p), Err(LabError::SchemaMismatch(_))));
    }
}
