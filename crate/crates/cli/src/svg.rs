//! Static SVG overlay of an original series and its counterfactual.
//!
//! One panel per channel. Each panel holds the two polylines (one point
//! per time step), a translucent rectangle per changed segment of that
//! channel and a pair of axes with tick labels. Time step `t` sits at the
//! centre of a cell of width `dx`, so a segment `[s, e]` spans
//! `x(s) - dx/2 .. x(e) + dx/2`.

use std::fmt::Write as _;

use cfx_core::distance::ChangeMask;
use cfx_core::{Result, TimeSeries};

const WIDTH: f64 = 800.0;
const PANEL_HEIGHT: f64 = 200.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;
const X_TICKS: usize = 5;
const Y_TICKS: usize = 3;

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn render_svg(x: &TimeSeries, cf: &TimeSeries, mask: &ChangeMask) -> Result<String> {
    x.check_same_shape(cf)?;
    let (channels, length) = x.shape();
    let height = PANEL_HEIGHT * channels as f64;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="10">"#
    );
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = PANEL_HEIGHT - TOP - BOTTOM;
    let dx = plot_w / length as f64;
    for c in 0..channels {
        let (a, b) = (x.channel(c), cf.channel(c));
        let (mut lo, mut hi) = a
            .iter()
            .chain(b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if hi - lo < 1e-12 {
            lo -= 1.0;
            hi += 1.0;
        }
        let top = c as f64 * PANEL_HEIGHT + TOP;
        let px = |t: f64| LEFT + (t + 0.5) * dx;
        let py = |v: f64| top + plot_h * (hi - v) / (hi - lo);
        let _ = writeln!(out, r#"<g class="panel" id="channel-{c}">"#);
        for seg in mask.segments.iter().filter(|s| s.channel == c) {
            let _ = writeln!(
                out,
                r##"<rect class="changed" x="{}" y="{}" width="{}" height="{}" fill="#ff7f0e" fill-opacity="0.25"/>"##,
                fmt(LEFT + seg.start as f64 * dx),
                fmt(top),
                fmt(seg.len() as f64 * dx),
                fmt(plot_h)
            );
        }
        let bottom = top + plot_h;
        let _ = writeln!(
            out,
            r#"<path class="axes" d="M{l} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
            l = fmt(LEFT),
            t = fmt(top),
            b = fmt(bottom),
            r = fmt(LEFT + plot_w)
        );
        for i in 0..X_TICKS {
            let t = if X_TICKS == 1 || length == 1 { 0 } else { i * (length - 1) / (X_TICKS - 1) };
            let xpos = fmt(px(t as f64));
            let _ = writeln!(
                out,
                r#"<line class="tick" x1="{xpos}" y1="{b}" x2="{xpos}" y2="{b5}" stroke="black"/><text x="{xpos}" y="{b15}" text-anchor="middle">{t}</text>"#,
                b = fmt(bottom),
                b5 = fmt(bottom + 5.0),
                b15 = fmt(bottom + 15.0)
            );
        }
        for i in 0..Y_TICKS {
            let v = lo + (hi - lo) * i as f64 / (Y_TICKS - 1) as f64;
            let ypos = fmt(py(v));
            let _ = writeln!(
                out,
                r#"<line class="tick" x1="{l5}" y1="{ypos}" x2="{l}" y2="{ypos}" stroke="black"/><text x="{l8}" y="{ypos}" text-anchor="end" dominant-baseline="middle">{label}</text>"#,
                l5 = fmt(LEFT - 5.0),
                l = fmt(LEFT),
                l8 = fmt(LEFT - 8.0),
                label = fmt(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}">channel {c}</text>"#,
            fmt(LEFT),
            fmt(top - 6.0)
        );
        for (class, series, colour) in [("original", a, "#1f77b4"), ("counterfactual", b, "#d62728")] {
            let points: Vec<String> = series
                .iter()
                .enumerate()
                .map(|(t, &v)| format!("{},{}", fmt(px(t as f64)), fmt(py(v))))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="{class}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                points.join(" ")
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfx_core::distance::changed_segments;

    fn render(x: &TimeSeries, cf: &TimeSeries) -> String {
        render_svg(x, cf, &changed_segments(x, cf, 1e-9).unwrap()).unwrap()
    }

    #[test]
    fn identical_series_have_no_highlight() {
        let x = TimeSeries::univariate((0..20).map(|t| t as f64).collect()).unwrap();
        let svg = render(&x, &x);
        assert_eq!(svg.matches("<rect").count(), 0);
        let lines: Vec<&str> = svg.lines().filter(|l| l.starts_with("<polyline")).collect();
        let points = |l: &str| l.split("points=\"").nth(1).unwrap().split('"').next().unwrap().to_string();
        assert_eq!(points(lines[0]), points(lines[1]));
    }

    #[test]
    fn one_segment_maps_to_its_time_range() {
        let x = TimeSeries::univariate(vec![0.0; 10]).unwrap();
        let mut v = vec![0.0; 10];
        v[3..6].fill(1.0);
        let svg = render(&x, &x.with_values(v).unwrap());
        assert_eq!(svg.matches("<rect").count(), 1);
        let dx = (WIDTH - LEFT - RIGHT) / 10.0;
        assert!(svg.contains(&format!(r#"x="{}" "#, fmt(LEFT + 3.0 * dx))));
        assert!(svg.contains(&format!(r#"width="{}" "#, fmt(3.0 * dx))));
    }

    #[test]
    fn one_panel_per_channel() {
        let x = TimeSeries::zeros(3, 8).unwrap();
        assert_eq!(render(&x, &x).matches(r#"class="panel""#).count(), 3);
    }
}
