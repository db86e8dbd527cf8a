//! Minimal self-contained SVG charts: line plots of training curves and
//! confusion-matrix heatmaps.

use std::fmt::Write;

use super::ConfusionMatrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

/// Line chart with one polyline per series; `y_range` of `None` spans `[0, max]`.
pub fn line_chart(title: &str, y_label: &str, series: &[Series<'_>], y_range: Option<(f64, f64)>) -> String {
    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let (y_lo, mut y_hi) = y_range.unwrap_or_else(|| {
        let max = series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite()).fold(0.0, f64::max);
        (0.0, max)
    });
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |i: usize| MARGIN + if n > 1 { i as f64 / (n - 1) as f64 * plot_w } else { plot_w / 2.0 };
    let y_of = |v: f64| MARGIN + (1.0 - ((v - y_lo) / (y_hi - y_lo)).clamp(0.0, 1.0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(svg, r#"<path d="M{MARGIN},{MARGIN} V{} H{}" fill="none" stroke="black"/>"#, HEIGHT - MARGIN, WIDTH - MARGIN);
    for tick in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.2}</text>"#,
            MARGIN - 6.0,
            y_of(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">epoch (1-{n})</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let points: Vec<String> = s.values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="{}" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            escape(s.name),
            s.color,
            points.join(" ")
        );
        let ly = MARGIN + 16.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{}">{}</text>"#,
            WIDTH - MARGIN - 90.0,
            s.color,
            escape(s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Heatmap with rows = true class, columns = predicted class, and the count in each cell.
pub fn heatmap(title: &str, m: &ConfusionMatrix) -> String {
    let k = m.n_classes();
    let cell = ((WIDTH - 2.0 * MARGIN - 80.0) / k.max(1) as f64).min(90.0);
    let left = MARGIN + 80.0;
    let top = MARGIN + 20.0;
    let max = m.counts().iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let height = top + cell * k as f64 + MARGIN;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#);
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (i, name) in m.class_names().iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            left - 6.0,
            top + cell * (i as f64 + 0.5) + 4.0,
            escape(name)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            left + cell * (i as f64 + 0.5),
            top - 6.0,
            escape(name)
        );
    }
    for (i, row) in m.counts().iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            let shade = 255 - (count as f64 / max * 200.0).round() as u8;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({shade},{shade},255)" stroke="white"/>"#,
                left + cell * j as f64,
                top + cell * i as f64
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="13">{count}</text>"#,
                left + cell * (j as f64 + 0.5),
                top + cell * (i as f64 + 0.5) + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
