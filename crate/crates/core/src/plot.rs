//! Minimal self-contained SVG line charts for sweep results.
//!
//! Data-first: charts are rendered from the same rows that go into
//! `plotdata.csv`, so they can be regenerated offline without any plotting
//! dependency.

use std::fmt::Write;

/// One plotted series: `(x, mean, ci)` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 180.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 56.0;

fn nice_ticks(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let span = hi - lo;
    let raw = span / n as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= n as f64 + 0.5)
        .unwrap_or(mag * 10.0);
    let start = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    let mut t = start;
    while t <= hi + 1e-9 * span {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (0.01..10_000.0).contains(&a) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

/// Renders a line chart with 95% confidence whiskers.
pub fn render_line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for (x, m, ci) in &s.points {
            xs.push(*x);
            ys.push(m - ci);
            ys.push(m + ci);
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |x: f64| {
        if x_hi > x_lo {
            MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let py = |y: f64| {
        if y_hi > y_lo {
            MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h
        } else {
            MARGIN_T + plot_h / 2.0
        }
    };
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        escape(title)
    );
    // Axes.
    let _ = write!(
        svg,
        r#"<line x1="{l:.1}" y1="{b:.1}" x2="{r:.1}" y2="{b:.1}" stroke="black"/><line x1="{l:.1}" y1="{t:.1}" x2="{l:.1}" y2="{b:.1}" stroke="black"/>"#,
        l = MARGIN_L,
        r = MARGIN_L + plot_w,
        t = MARGIN_T,
        b = MARGIN_T + plot_h,
    );
    for tick in nice_ticks(x_lo, x_hi, 6) {
        let x = px(tick);
        let _ = write!(
            svg,
            r#"<line x1="{x:.1}" y1="{b:.1}" x2="{x:.1}" y2="{b2:.1}" stroke="black"/><text x="{x:.1}" y="{ty:.1}" text-anchor="middle">{}</text>"#,
            fmt_tick(tick),
            b = MARGIN_T + plot_h,
            b2 = MARGIN_T + plot_h + 5.0,
            ty = MARGIN_T + plot_h + 20.0,
        );
    }
    for tick in nice_ticks(y_lo, y_hi, 6) {
        let y = py(tick);
        let _ = write!(
            svg,
            r##"<line x1="{x1:.1}" y1="{y:.1}" x2="{x2:.1}" y2="{y:.1}" stroke="black"/><line x1="{x2:.1}" y1="{y:.1}" x2="{xr:.1}" y2="{y:.1}" stroke="#eeeeee"/><text x="{tx:.1}" y="{ty:.1}" text-anchor="end">{}</text>"##,
            fmt_tick(tick),
            x1 = MARGIN_L - 5.0,
            x2 = MARGIN_L,
            xr = MARGIN_L + plot_w,
            y = y,
            tx = MARGIN_L - 9.0,
            ty = y + 4.0,
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    );
    // Series.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut d = String::new();
        for (i, (x, m, _)) in s.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(*x), py(*m));
        }
        let _ = write!(svg, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.8"/>"#);
        for (x, m, ci) in &s.points {
            let (cx, cy) = (px(*x), py(*m));
            let _ = write!(svg, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.6" fill="{color}"/>"#);
            if *ci > 0.0 {
                let (y1, y2) = (py(m + ci), py(m - ci));
                let _ = write!(
                    svg,
                    r#"<line x1="{cx:.2}" y1="{y1:.2}" x2="{cx:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="1"/>"#
                );
            }
        }
        // Legend entry.
        let ly = MARGIN_T + 16.0 * si as f64;
        let lx = WIDTH - MARGIN_R + 14.0;
        let _ = write!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>");
    svg
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let series = vec![
            Series {
                name: "voting_accuracy".into(),
                points: vec![(0.001, 0.91, 0.02), (0.005, 0.95, 0.01), (0.01, 0.97, 0.01)],
            },
            Series {
                name: "greedy_precision".into(),
                points: vec![(0.001, 0.5, 0.1), (0.005, 0.6, 0.1), (0.01, 0.7, 0.05)],
            },
        ];
        let svg = render_line_chart("drop-rate sweep", "drop rate", "metric", &series);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains("voting_accuracy"));
        // Deterministic output for identical input.
        assert_eq!(svg, render_line_chart("drop-rate sweep", "drop rate", "metric", &series));
    }

    #[test]
    fn handles_degenerate_inputs() {
        let svg = render_line_chart("empty", "x", "y", &[]);
        assert!(svg.contains("</svg>"));
        let flat = vec![Series { name: "flat".into(), points: vec![(1.0, 0.5, 0.0)] }];
        assert!(render_line_chart("one point", "x", "y", &flat).contains("circle"));
    }
}
