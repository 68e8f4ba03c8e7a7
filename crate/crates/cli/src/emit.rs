//! CSV and SVG renderings of sweep tables.

use std::fmt::Write as _;
use std::path::Path;

use crate::sweep::SweepTable;

/// `x` with `digits` significant digits in plain decimal notation.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit, e.g. 0.9999996 -> 1.000000.
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 > magnitude && decimals > 0 {
        let d = decimals - 1;
        return format!("{x:.d$}");
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    let corner = format!("{}\\{}", table.row_name, table.col_name);
    out.push_str(&csv_field(&corner));
    for c in &table.col_labels {
        out.push(',');
        out.push_str(&csv_field(c));
    }
    out.push('\n');
    for (i, label) in table.row_labels.iter().enumerate() {
        out.push_str(&csv_field(label));
        for j in 0..table.cols() {
            out.push(',');
            if let Some(v) = table.value(i, j) {
                out.push_str(&format_significant(v, 6));
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv(table: &SweepTable, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_csv(table))
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round `x` up to a multiple of `step`.
fn ceil_to(x: f64, step: f64) -> f64 {
    (x / step).ceil() * step
}

/// Line chart with one polyline per row; y in percent.
pub fn to_svg(table: &SweepTable) -> String {
    let (w, h) = (760.0, 480.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let xs = &table.col_values;
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    let numeric = xs.len() > 1 && xmax > xmin && xs.windows(2).all(|p| p[1] > p[0]);
    let log = numeric && xmin > 0.0 && xmax / xmin > 1e3;
    let x_at = |j: usize| -> f64 {
        let t = if log {
            (xs[j] / xmin).ln() / (xmax / xmin).ln()
        } else if numeric {
            (xs[j] - xmin) / (xmax - xmin)
        } else if table.cols() > 1 {
            j as f64 / (table.cols() - 1) as f64
        } else {
            0.5
        };
        left + t * pw
    };
    let vmax = table
        .iter_cells()
        .filter_map(|(_, _, c)| c.value())
        .fold(1.0, f64::max);
    let ymax = ceil_to(vmax * 100.0, 20.0);
    let y_at = |v: f64| top + ph * (1.0 - (v * 100.0 / ymax).clamp(0.0, 1.0));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if let Some(t) = &table.title {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            left + pw / 2.0,
            escape(t)
        );
    }

    let mut tick = 0.0;
    while tick <= ymax + 1e-9 {
        let y = y_at(tick / 100.0);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick}%</text>"#,
            left - 6.0,
            y + 4.0
        );
        tick += 20.0;
    }
    for (j, label) in table.col_labels.iter().enumerate() {
        let x = x_at(j);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/>"##,
            top + ph,
            top + ph + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph + 18.0,
            escape(label)
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 15.0,
        escape(&table.col_name)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">measured / actual asset correlation</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, label) in table.row_labels.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Blank cells split a row into separate segments.
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for j in 0..table.cols() {
            match table.value(i, j) {
                Some(v) => segments
                    .last_mut()
                    .expect("nonempty")
                    .push((x_at(j), y_at(v))),
                None if !segments.last().expect("nonempty").is_empty() => segments.push(Vec::new()),
                None => {}
            }
        }
        for seg in segments.iter().filter(|s| !s.is_empty()) {
            let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                pts.join(" ")
            );
            for (x, y) in seg {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#
                );
            }
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{} = {}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&table.row_name),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(table: &SweepTable, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, to_svg(table))
}
