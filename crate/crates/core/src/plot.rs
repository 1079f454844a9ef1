//! SVG line chart of `p_correct` against `n` from a summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Columns that split a summary into separate series when they vary.
const SERIES_KEYS: [&str; 4] = ["p0", "beta", "design", "error"];

#[derive(Debug, Default)]
struct Series {
    points: Vec<(f64, f64)>,
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".to_string() } else { s.to_string() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a summary CSV (needs `n`, `criterion`, `p_correct`) as SVG.
///
/// One series per criterion, further split by any of `p0`, `beta`, `design`
/// or `error` that takes more than one value. Series with a single point get
/// a marker but no line. Output depends only on the input text.
pub fn render_svg(csv_text: &str) -> Result<String> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let need = |name: &str| find(name).ok_or_else(|| Error::input(format!("summary table lacks column `{name}`")));
    let (n_col, crit_col, p_col) = (need("n")?, need("criterion")?, need("p_correct")?);
    let extra: Vec<(&str, usize)> = SERIES_KEYS.iter().filter_map(|k| find(k).map(|i| (*k, i))).collect();

    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::input(format!("row {}: bad `{name}` value", r + 1)))
        };
        let n = num(n_col, "n")?;
        let pc = num(p_col, "p_correct")?;
        if !(0.0..=1.0).contains(&pc) {
            return Err(Error::input(format!("row {}: p_correct {pc} outside [0, 1]", r + 1)));
        }
        let keys: Vec<String> = extra.iter().map(|&(_, i)| rec.get(i).unwrap_or("").to_string()).collect();
        rows.push((rec[crit_col].to_string(), keys, n, pc));
    }
    if rows.is_empty() {
        return Err(Error::input("summary table has no rows"));
    }

    let varying: Vec<usize> = (0..extra.len())
        .filter(|&k| rows.iter().any(|r| r.1[k] != rows[0].1[k]))
        .collect();
    let mut series: BTreeMap<String, Series> = BTreeMap::new();
    for (crit, keys, n, pc) in &rows {
        let mut label = crit.clone();
        for &k in &varying {
            let _ = write!(label, " {}={}", extra[k].0, keys[k]);
        }
        series.entry(label).or_default().points.push((*n, *pc));
    }
    for s in series.values_mut() {
        s.points.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    }

    let (mut lo, mut hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), r| (l.min(r.2), h.max(r.2)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |n: f64| LEFT + (n - lo) / (hi - lo) * plot_w;
    let sy = |v: f64| TOP + (1.0 - v) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    // axes
    let (x0, x1, y0, y1) = (LEFT, LEFT + plot_w, TOP + plot_h, TOP);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = fmt_num(sy(v));
        let _ = writeln!(svg, r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#dddddd"/>"##);
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end" dy="4">{}</text>"#, LEFT - 6.0, fmt_num(v));
    }
    let mut ticks: Vec<f64> = rows.iter().map(|r| r.2).collect();
    ticks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    ticks.dedup();
    for t in ticks {
        let x = fmt_num(sx(t));
        let _ = writeln!(svg, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, fmt_num(t));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#,
        fmt_num(LEFT + plot_w / 2.0),
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">P(correct)</text>"#,
        fmt_num(TOP + plot_h / 2.0)
    );

    for (i, (label, s)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<g class="series" data-label="{}">"#, escape(label));
        if s.points.len() >= 2 {
            let pts: Vec<String> = s.points.iter().map(|&(n, v)| format!("{},{}", fmt_num(sx(n)), fmt_num(sy(v)))).collect();
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        }
        for &(n, v) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{}" cy="{}" r="4" fill="{color}"/>"#,
                fmt_num(sx(n)),
                fmt_num(sy(v))
            );
        }
        let _ = writeln!(svg, "</g>");
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{color}"/>"#, ly - 6.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" dy="4">{}</text>"#, lx + 18.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
