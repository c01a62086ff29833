//! Minimal standalone SVG rendering of the CSV files the other commands write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::failure::Failure;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Reads a CSV and renders it: success-rate bars when it has a `success`
/// column, otherwise one polyline per numeric column against `step` (or the
/// row index).
pub fn render_csv(path: &Path) -> Result<String, Failure> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err(Failure::data(format!("{} has no data rows", path.display())));
    }
    let title = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if headers.iter().any(|h| h == "success") {
        success_bars(&title, &headers, &rows)
    } else {
        line_chart(&title, &headers, &rows)
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim() {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(title: &str) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{y}" stroke="black"/>"#,
        x = WIDTH - MARGIN,
        y = HEIGHT - MARGIN
    );
    svg
}

fn success_bars(title: &str, headers: &[String], rows: &[Vec<String>]) -> Result<String, Failure> {
    let col = |name: &str| headers.iter().position(|h| h == name);
    let success = col("success").expect("checked by caller");
    let group_cols: Vec<usize> = ["task", "lifting"].iter().filter_map(|n| col(n)).collect();
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let ok = parse_bool(&row[success]).ok_or_else(|| Failure::data(format!("row {}: success value {:?} is not a boolean", i + 1, row[success])))?;
        let key = group_cols.iter().map(|&c| row[c].as_str()).collect::<Vec<_>>().join(" / ");
        let entry = groups.entry(key).or_insert((0, 0));
        entry.0 += usize::from(ok);
        entry.1 += 1;
    }

    let mut svg = open_svg(title);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / groups.len() as f64;
    for tick in 0..=4 {
        let frac = tick as f64 / 4.0;
        let y = HEIGHT - MARGIN - frac * plot_h;
        let _ = writeln!(svg, r#"<text x="{}" y="{y:.1}" text-anchor="end">{:.0}%</text>"#, MARGIN - 6.0, frac * 100.0);
    }
    for (i, (label, (ok, n))) in groups.iter().enumerate() {
        let rate = *ok as f64 / *n as f64;
        let h = rate * plot_h;
        let x = MARGIN + i as f64 * slot + 0.15 * slot;
        let y = HEIGHT - MARGIN - h;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            0.7 * slot,
            PALETTE[i % PALETTE.len()]
        );
        let cx = x + 0.35 * slot;
        let _ = writeln!(svg, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{ok}/{n}</text>"#, y - 4.0);
        let _ = writeln!(
            svg,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(if label.is_empty() { "all" } else { label })
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn line_chart(title: &str, headers: &[String], rows: &[Vec<String>]) -> Result<String, Failure> {
    let x_col = headers.iter().position(|h| h == "step");
    let xs: Vec<f64> = match x_col {
        Some(c) => rows
            .iter()
            .enumerate()
            .map(|(i, r)| r[c].trim().parse().map_err(|_| Failure::data(format!("row {}: step {:?} is not a number", i + 1, r[c]))))
            .collect::<Result<_, _>>()?,
        None => (0..rows.len()).map(|i| i as f64).collect(),
    };
    let series: Vec<(&str, Vec<f64>)> = headers
        .iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != x_col)
        .filter_map(|(c, name)| {
            let ys: Option<Vec<f64>> = rows.iter().map(|r| r[c].trim().parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            ys.map(|ys| (name.as_str(), ys))
        })
        .collect();
    if series.is_empty() {
        return Err(Failure::data("CSV has no numeric columns to plot"));
    }

    let stride = rows.len().div_ceil(MAX_POINTS).max(1);
    let keep: Vec<usize> = (0..rows.len()).step_by(stride).chain(std::iter::once(rows.len() - 1)).collect();
    let (x_min, x_max) = bounds(xs.iter().copied());
    let (y_min, y_max) = bounds(series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = open_svg(title);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 6.0, MARGIN, fmt_tick(y_max));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 6.0, HEIGHT - MARGIN, fmt_tick(y_min));
    let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" text-anchor="middle">{}</text>"#, HEIGHT - MARGIN + 16.0, fmt_tick(x_min));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH - MARGIN, HEIGHT - MARGIN + 16.0, fmt_tick(x_max));
    for (i, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        let mut last = None;
        for &k in &keep {
            if last == Some(k) {
                continue;
            }
            last = Some(k);
            let _ = write!(points, "{:.2},{:.2} ", sx(xs[k]), sy(ys[k]));
        }
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, points.trim_end());
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e5) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
