//! Deterministic SVG rendering for the size-versus-empty-probability curve.
//!
//! Fixed 800x500 canvas, log-scaled size axis, exactly two axis `<path>`
//! elements and one `<circle>` per point, so structure and bytes are stable
//! for identical input.

use std::fmt::Write as _;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;

const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 30.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

fn fmt(v: f64) -> String {
    format!("{:.2}", v)
}

/// Render `(train size, mean empty-string log prob)` points, pre-sorted by
/// size, into an SVG document.
pub fn render_curve(points: &[(usize, f64)]) -> String {
    let log_size = |s: usize| (s.max(1) as f64).log10();
    let x_min = points
        .iter()
        .map(|&(s, _)| log_size(s))
        .fold(f64::INFINITY, f64::min);
    let x_max = points
        .iter()
        .map(|&(s, _)| log_size(s))
        .fold(f64::NEG_INFINITY, f64::max);
    let y_min_raw = points.iter().map(|&(_, y)| y).fold(f64::INFINITY, f64::min);
    let y_max_raw = points
        .iter()
        .map(|&(_, y)| y)
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_max_raw - y_min_raw) * 0.08).max(0.25);
    let (y_min, y_max) = (y_min_raw - pad, y_max_raw + pad);
    let x_span = (x_max - x_min).max(1e-9);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |s: usize| MARGIN_LEFT + (log_size(s) - x_min) / x_span * plot_w;
    let y_of = |v: f64| MARGIN_TOP + (y_max - v) / (y_max - y_min) * plot_h;

    let x_axis_y = MARGIN_TOP + plot_h;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        WIDTH as u64, HEIGHT as u64, WIDTH as u64, HEIGHT as u64
    );
    let _ = writeln!(
        out,
        "  <rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>",
        WIDTH as u64, HEIGHT as u64
    );

    // X axis with one tick per distinct size.
    let mut x_axis = format!(
        "M {} {} L {} {}",
        fmt(MARGIN_LEFT),
        fmt(x_axis_y),
        fmt(MARGIN_LEFT + plot_w),
        fmt(x_axis_y)
    );
    let mut sizes: Vec<usize> = points.iter().map(|&(s, _)| s).collect();
    sizes.dedup();
    for &s in &sizes {
        let x = x_of(s);
        let _ = write!(
            x_axis,
            " M {} {} L {} {}",
            fmt(x),
            fmt(x_axis_y),
            fmt(x),
            fmt(x_axis_y + 6.0)
        );
    }
    let _ = writeln!(
        out,
        "  <path d=\"{}\" stroke=\"black\" fill=\"none\" stroke-width=\"1.5\"/>",
        x_axis
    );

    // Y axis with five evenly spaced ticks.
    let mut y_axis = format!(
        "M {} {} L {} {}",
        fmt(MARGIN_LEFT),
        fmt(MARGIN_TOP),
        fmt(MARGIN_LEFT),
        fmt(x_axis_y)
    );
    let y_ticks: Vec<f64> = (0..5)
        .map(|i| y_min + (y_max - y_min) * i as f64 / 4.0)
        .collect();
    for &v in &y_ticks {
        let y = y_of(v);
        let _ = write!(
            y_axis,
            " M {} {} L {} {}",
            fmt(MARGIN_LEFT - 6.0),
            fmt(y),
            fmt(MARGIN_LEFT),
            fmt(y)
        );
    }
    let _ = writeln!(
        out,
        "  <path d=\"{}\" stroke=\"black\" fill=\"none\" stroke-width=\"1.5\"/>",
        y_axis
    );

    // Tick labels.
    for &s in &sizes {
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
            fmt(x_of(s)),
            fmt(x_axis_y + 22.0),
            s
        );
    }
    for &v in &y_ticks {
        let _ = writeln!(
            out,
            "  <text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"end\">{:.1}</text>",
            fmt(MARGIN_LEFT - 10.0),
            fmt(y_of(v) + 4.0),
            v
        );
    }

    // Axis titles.
    let _ = writeln!(
        out,
        "  <text x=\"{}\" y=\"{}\" font-size=\"15\" text-anchor=\"middle\">training samples</text>",
        fmt(MARGIN_LEFT + plot_w / 2.0),
        fmt(HEIGHT - 14.0)
    );
    let _ = writeln!(
        out,
        "  <text x=\"18\" y=\"{}\" font-size=\"15\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">mean empty-string log-probability</text>",
        fmt(MARGIN_TOP + plot_h / 2.0),
        fmt(MARGIN_TOP + plot_h / 2.0)
    );

    // Connecting line and the points themselves.
    let line: Vec<String> = points
        .iter()
        .map(|&(s, v)| format!("{},{}", fmt(x_of(s)), fmt(y_of(v))))
        .collect();
    let _ = writeln!(
        out,
        "  <polyline points=\"{}\" stroke=\"steelblue\" fill=\"none\" stroke-width=\"2\"/>",
        line.join(" ")
    );
    for &(s, v) in points {
        let _ = writeln!(
            out,
            "  <circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"steelblue\"/>",
            fmt(x_of(s)),
            fmt(y_of(v))
        );
    }
    out.push_str("</svg>\n");
    out
}
