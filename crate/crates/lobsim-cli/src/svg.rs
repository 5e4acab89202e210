//! Minimal SVG charts. Output depends only on the inputs, so re-rendering
//! unchanged data yields identical bytes.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        esc(title)
    );
    s
}

fn axis_labels(s: &mut String, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 12.0,
        esc(xlabel)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    );
}

/// Blue-to-red ramp for a value in [0, 1].
fn ramp(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v).round() as u8;
    let b = (255.0 * (1.0 - v)).round() as u8;
    format!("rgb({r},64,{b})")
}

/// Heat map of `cells[row][col]` in [0, 1]; rows run bottom to top.
pub fn heatmap(title: &str, cells: &[Vec<Option<f64>>], xlabel: &str, ylabel: &str) -> String {
    let mut s = open(W, H, title);
    let rows = cells.len().max(1);
    let cols = cells.first().map_or(1, Vec::len).max(1);
    let (cw, ch) = ((W - 2.0 * PAD) / cols as f64, (H - 2.0 * PAD) / rows as f64);
    for (i, row) in cells.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            let x = PAD + j as f64 * cw;
            let y = H - PAD - (i + 1) as f64 * ch;
            let fill = c.map_or("rgb(230,230,230)".to_string(), ramp);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{fill}"/>"#
            );
        }
    }
    axis_labels(&mut s, xlabel, ylabel);
    s.push_str("</svg>\n");
    s
}

fn bounds(series: &[(String, Vec<(f64, f64)>)]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Polylines with a legend; non-finite points are skipped.
pub fn line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)], xlabel: &str, ylabel: &str) -> String {
    let mut s = open(W, H, title);
    let (x0, x1, y0, y1) = bounds(series);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        s,
        r##"<rect x="{PAD}" y="{PAD}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#bbb" stroke-dasharray="4 3"/>"##,
            sy(0.0),
            W - PAD,
            sy(0.0)
        );
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            PAD + 8.0,
            PAD + 14.0 * (k + 1) as f64,
            esc(name)
        );
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="{:.1}">{x0:.3}</text>"#, H - PAD + 14.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{x1:.3}</text>"#, W - PAD, H - PAD + 14.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y0:.3}</text>"#, PAD - 4.0, H - PAD);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{PAD}" text-anchor="end">{y1:.3}</text>"#, PAD - 4.0);
    axis_labels(&mut s, xlabel, ylabel);
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars, one per label, signed around a zero axis.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let h = (bars.len() as f64 * 14.0 + 2.0 * PAD).max(H);
    let mut s = open(W, h, title);
    let m = bars.iter().map(|b| b.1.abs()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    // Labels take the left 180 px; bars extend either way from `zero`.
    let zero = 180.0 + (W - 196.0) / 2.0;
    let half = (W - 196.0) / 2.0;
    for (k, (label, v)) in bars.iter().enumerate() {
        let y = PAD + k as f64 * 14.0;
        let len = v.abs() / m * half;
        let x = if *v < 0.0 { zero - len } else { zero };
        let color = if *v < 0.0 { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{len:.1}" height="11" fill="{color}"/>"#,
            y - 9.0
        );
        let _ = writeln!(s, r#"<text x="8" y="{y:.1}">{}</text>"#, esc(label));
    }
    s.push_str("</svg>\n");
    s
}

/// A plain table rendered as text rows.
pub fn table(title: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let col_w = ((W - 32.0) / header.len().max(1) as f64).max(60.0);
    let w = (col_w * header.len() as f64 + 32.0).max(W);
    let h = 60.0 + 18.0 * (rows.len() + 1) as f64;
    let mut s = open(w, h, title);
    let row = |s: &mut String, y: f64, cells: &[String], bold: bool| {
        for (k, c) in cells.iter().enumerate() {
            let weight = if bold { r#" font-weight="bold""# } else { "" };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{y:.1}"{weight}>{}</text>"#,
                16.0 + k as f64 * col_w,
                esc(c)
            );
        }
    };
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    row(&mut s, 48.0, &head, true);
    for (i, r) in rows.iter().enumerate() {
        row(&mut s, 66.0 + 18.0 * i as f64, r, false);
    }
    s.push_str("</svg>\n");
    s
}

/// Small-multiple histograms laid out on a grid of `cols` panels per row.
pub fn histograms(title: &str, panels: &[(String, Vec<u64>)], cols: usize) -> String {
    let (pw, ph) = (150.0, 90.0);
    let rows = panels.len().div_ceil(cols.max(1));
    let (w, h) = (pw * cols as f64 + 20.0, ph * rows as f64 + 40.0);
    let mut s = open(w, h, title);
    for (k, (label, counts)) in panels.iter().enumerate() {
        let (cx, cy) = (10.0 + (k % cols) as f64 * pw, 32.0 + (k / cols) as f64 * ph);
        let m = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
        let bw = (pw - 10.0) / counts.len().max(1) as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{cx:.1}" y="{cy:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#ccc"/>"##,
            pw - 10.0,
            ph - 20.0
        );
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let bh = c as f64 / m * (ph - 24.0);
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{bh:.2}" fill="#1f77b4"/>"##,
                cx + i as f64 * bw,
                cy + ph - 20.0 - bh
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="9">{}</text>"#,
            cy + ph - 8.0,
            esc(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
