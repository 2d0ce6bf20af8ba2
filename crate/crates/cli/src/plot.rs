//! Standalone SVG line charts rendered from the experiment CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

pub const COST_SVG: &str = "cost.svg";
pub const FREQUENCY_SVG: &str = "frequency.svg";

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: [f64; 4] = [30.0, 20.0, 50.0, 70.0]; // top right bottom left

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Optional shaded band `(lower, upper)`.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Series,
    pub reference: Option<(f64, String)>,
    pub y_range: Option<(f64, f64)>,
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>), CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?.clone();
    let rows = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Input(format!("{} has no data rows", path.display())));
    }
    Ok((header, rows))
}

fn column(header: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Input(format!("{} has no column {name:?}", path.display())))
}

fn number(row: &csv::StringRecord, i: usize, path: &Path) -> Result<f64, CliError> {
    row.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input(format!("{}: bad number in column {i}", path.display())))
}

/// Mean cumulative cost per episode over runs, with a normal 95% band.
pub fn cost_chart(episodes_csv: &Path) -> Result<Chart, CliError> {
    let (h, rows) = read_rows(episodes_csv)?;
    let ep = column(&h, "episode", episodes_csv)?;
    let cost = column(&h, "cumulative_cost", episodes_csv)?;
    let mut by_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in &rows {
        let e = number(row, ep, episodes_csv)? as usize;
        by_episode.entry(e).or_default().push(number(row, cost, episodes_csv)?);
    }
    let mut s = Series {
        x: Vec::new(),
        y: Vec::new(),
        band: Some((Vec::new(), Vec::new())),
    };
    for (e, v) in by_episode {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 {
            v.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let half = 1.96 * (var / n).sqrt();
        s.x.push(e as f64 + 1.0);
        s.y.push(mean);
        let (lo, hi) = s.band.as_mut().expect("band");
        lo.push(mean - half);
        hi.push(mean + half);
    }
    Ok(Chart {
        title: "Cumulative cost per episode".into(),
        x_label: "episode".into(),
        y_label: "cumulative cost".into(),
        series: s,
        reference: None,
        y_range: None,
    })
}

/// Per-step safety frequency with its Wilson band and the `η` line.
pub fn frequency_chart(aggregate_csv: &Path) -> Result<Chart, CliError> {
    let (h, rows) = read_rows(aggregate_csv)?;
    let idx = |n| column(&h, n, aggregate_csv);
    let (step, freq, lo, hi, eta) = (idx("step")?, idx("frequency")?, idx("wilson_lower")?, idx("wilson_upper")?, idx("eta")?);
    let mut s = Series {
        x: Vec::new(),
        y: Vec::new(),
        band: Some((Vec::new(), Vec::new())),
    };
    for row in &rows {
        s.x.push(number(row, step, aggregate_csv)?);
        s.y.push(number(row, freq, aggregate_csv)?);
        let (l, u) = s.band.as_mut().expect("band");
        l.push(number(row, lo, aggregate_csv)?);
        u.push(number(row, hi, aggregate_csv)?);
    }
    let eta = number(&rows[0], eta, aggregate_csv)?;
    let floor = s.band.as_ref().expect("band").0.iter().copied().fold(eta, f64::min);
    Ok(Chart {
        title: "Constraint satisfaction frequency per step".into(),
        x_label: "step".into(),
        y_label: "frequency".into(),
        series: s,
        reference: Some((eta, format!("eta = {eta}"))),
        y_range: Some(((floor - 0.02).max(0.0), 1.0)),
    })
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= target as f64).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn polyline(xs: &[f64], ys: &[f64], px: &impl Fn(f64) -> f64, py: &impl Fn(f64) -> f64) -> String {
    xs.iter().zip(ys).map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y))).collect::<Vec<_>>().join(" ")
}

pub fn render_svg(c: &Chart) -> String {
    let s = &c.series;
    let (x0, x1) = s.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { (x0 - 1.0, x0 + 1.0) };
    let (y0, y1) = c.y_range.unwrap_or_else(|| {
        let mut all: Vec<f64> = s.y.clone();
        if let Some((l, u)) = &s.band {
            all.extend(l);
            all.extend(u);
        }
        if let Some((r, _)) = c.reference {
            all.push(r);
        }
        let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = ((hi - lo) * 0.05).max(1e-9);
        (lo - pad, hi + pad)
    });
    let [top, right, bottom, left] = MARGIN;
    let pw = WIDTH - left - right;
    let ph = HEIGHT - top - bottom;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (1.0 - (y.clamp(y0, y1) - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, c.title);

    for t in nice_ticks(y0, y1, 6) {
        let y = py(t);
        let _ = writeln!(out, r##"<line x1="{left}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, left + pw);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{t}</text>"#, left - 6.0, y + 4.0);
    }
    for t in nice_ticks(x0, x1, 8) {
        let x = px(t);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#, top + ph + 16.0);
    }
    let _ = writeln!(out, r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);

    if let Some((lo, hi)) = &s.band {
        let mut pts = polyline(&s.x, hi, &px, &py);
        let back: Vec<f64> = s.x.iter().rev().copied().collect();
        let lo_rev: Vec<f64> = lo.iter().rev().copied().collect();
        pts.push(' ');
        pts.push_str(&polyline(&back, &lo_rev, &px, &py));
        let _ = writeln!(out, r##"<polygon class="band" points="{pts}" fill="#d62728" fill-opacity="0.2" stroke="none"/>"##);
    }
    let _ = writeln!(
        out,
        r##"<polyline class="series" points="{}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##,
        polyline(&s.x, &s.y, &px, &py)
    );
    if let Some((r, label)) = &c.reference {
        let y = py(*r);
        let _ = writeln!(
            out,
            r#"<line class="reference" x1="{left}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6 4" data-value="{r}"/>"#,
            left + pw
        );
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{label}</text>"#, left + pw - 4.0, y - 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, HEIGHT - 12.0, c.x_label);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        c.y_label
    );
    out.push_str("</svg>\n");
    out
}

/// Writes `cost.svg` and `frequency.svg` into `out_dir`.
pub fn plot_files(episodes_csv: &Path, aggregate_csv: &Path, out_dir: &Path) -> Result<Vec<std::path::PathBuf>, CliError> {
    let charts = [(cost_chart(episodes_csv)?, COST_SVG), (frequency_chart(aggregate_csv)?, FREQUENCY_SVG)];
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (chart, name) in charts {
        let path = out_dir.join(name);
        std::fs::write(&path, render_svg(&chart))?;
        written.push(path);
    }
    Ok(written)
}
