//! SVG histogram of per-episode SPL.

use std::fmt::Write as _;

const BINS: usize = 10;
const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

/// Episodes per SPL decile, one bar group per bin and one bar per series.
pub fn spl_histogram(series: &[(String, Vec<f64>)]) -> String {
    let counts: Vec<[usize; BINS]> = series
        .iter()
        .map(|(_, v)| {
            let mut c = [0; BINS];
            for &x in v {
                c[((x.clamp(0.0, 1.0) * BINS as f64) as usize).min(BINS - 1)] += 1;
            }
            c
        })
        .collect();
    let top = counts.iter().flatten().copied().max().unwrap_or(0).max(1);

    let (w, h, left, bottom, top_pad) = (640.0, 360.0, 50.0, 40.0, 20.0);
    let plot_w = w - left - 20.0;
    let plot_h = h - bottom - top_pad;
    let group = plot_w / BINS as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let base = top_pad + plot_h;
    let _ = writeln!(s, r#"<line x1="{left}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, left + plot_w);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top_pad}" x2="{left}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">SPL</text>"#, left + plot_w / 2.0, h - 5.0);
    let _ = writeln!(s, r#"<text x="{left}" y="{}" text-anchor="end">{top}</text>"#, top_pad + 4.0);
    for b in 0..=BINS {
        let x = left + b as f64 * group;
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{:.1}</text>"#, base + 14.0, b as f64 / BINS as f64);
    }
    for (k, c) in counts.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for (b, &n) in c.iter().enumerate() {
            let bh = plot_h * n as f64 / top as f64;
            let x = left + b as f64 * group + group * 0.1 + k as f64 * bar;
            let _ = writeln!(s, r#"<rect x="{x:.2}" y="{:.2}" width="{bar:.2}" height="{bh:.2}" fill="{color}"/>"#, base - bh);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            left + 10.0,
            top_pad + 14.0 * (k as f64 + 1.0),
            series[k].0
        );
    }
    s.push_str("</svg>\n");
    s
}
