//! Self-contained SVG figures of a window and its forecast.
//!
//! The top panel shows coarse and fine contexts on one time axis measured in
//! fine steps relative to the horizon start; the bottom panel zooms into the
//! fine context, the horizon and the forecast. Padded spans are drawn as
//! `rect.padding` elements.

use std::fmt::Write;

use crate::decode::ForecastBundle;
use crate::series::MultiResWindow;

const WIDTH: f64 = 960.0;
const PANEL: f64 = 220.0;
const MARGIN: f64 = 40.0;

struct Panel {
    top: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Panel {
    fn x(&self, t: f64) -> f64 {
        MARGIN + (t - self.x0) / (self.x1 - self.x0).max(1e-12) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        self.top + PANEL - (v - self.y0) / (self.y1 - self.y0).max(1e-12) * PANEL
    }

    fn polyline(&self, svg: &mut String, class: &str, colour: &str, pts: &[(f64, f64)]) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|&(t, v)| format!("{:.2},{:.2}", self.x(t), self.y(v))).collect();
        let _ = writeln!(svg, r#"<polyline class="{class}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, coords.join(" "));
    }

    fn padding(&self, svg: &mut String, label: &str, t0: f64, t1: f64) {
        if t1 <= t0 {
            return;
        }
        let (a, b) = (self.x(t0), self.x(t1));
        let _ = writeln!(
            svg,
            r##"<rect class="padding" data-context="{label}" x="{a:.2}" y="{:.2}" width="{:.2}" height="{PANEL:.2}" fill="#f4c7c3" fill-opacity="0.5"/>"##,
            self.top,
            b - a
        );
    }

    fn frame(&self, svg: &mut String, title: &str) {
        let _ = writeln!(
            svg,
            r##"<rect class="frame" x="{MARGIN}" y="{:.2}" width="{:.2}" height="{PANEL}" fill="none" stroke="#888"/>"##,
            self.top,
            WIDTH - 2.0 * MARGIN
        );
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{:.2}" font-size="13" font-family="sans-serif">{}</text>"#, self.top - 6.0, escape(title));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Renders `window` (and `forecast`, if any) as an SVG document.
pub fn render_window_svg(window: &MultiResWindow, forecast: Option<&ForecastBundle>) -> String {
    let c = window.context_len() as f64;
    let k = window.ratio as f64;
    let h = window.horizon_len().max(forecast.map_or(0, |f| f.len())) as f64;
    let fine: Vec<(f64, f64)> = (window.fine_padding()..window.context_len()).map(|i| (i as f64 - c, window.fine[i])).collect();
    let coarse: Vec<(f64, f64)> = (window.coarse_padding()..window.coarse.len()).map(|j| ((j as f64 - c) * k + k / 2.0, window.coarse[j])).collect();
    let horizon: Vec<(f64, f64)> = window.horizon.iter().enumerate().map(|(t, &v)| (t as f64, v)).collect();

    let mut all: Vec<f64> = fine.iter().chain(&coarse).chain(&horizon).map(|p| p.1).collect();
    if let Some(f) = forecast {
        all.extend(f.mean.iter().chain(f.quantiles.iter().flatten()));
    }
    let (y0, y1) = range(all.iter());
    let overview = Panel { top: 30.0, x0: -c * k, x1: h, y0, y1 };
    let detail = Panel { top: 30.0 + PANEL + 50.0, x0: -c, x1: h, y0, y1 };
    let height = detail.top + PANEL + 30.0;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#);
    let _ = writeln!(svg, "<title>{}</title>", escape(&window.meta.id));

    overview.frame(&mut svg, &format!("{}: multiresolution context (x in fine steps, coarse ratio {})", window.meta.id, window.ratio));
    overview.padding(&mut svg, "coarse", -c * k, (window.coarse_padding() as f64 - c) * k);
    overview.padding(&mut svg, "fine", -c, window.fine_padding() as f64 - c);
    overview.polyline(&mut svg, "coarse", "#1f77b4", &coarse);
    overview.polyline(&mut svg, "fine", "#2ca02c", &fine);
    overview.polyline(&mut svg, "horizon", "#333333", &horizon);

    detail.frame(&mut svg, "fine context, horizon and forecast");
    detail.padding(&mut svg, "fine", -c, window.fine_padding() as f64 - c);
    detail.polyline(&mut svg, "fine", "#2ca02c", &fine);
    detail.polyline(&mut svg, "horizon", "#333333", &horizon);
    if let Some(f) = forecast {
        if let (Some(lo), Some(hi)) = (f.quantile(0.1), f.quantile(0.9)) {
            let mut pts: Vec<String> = lo.iter().enumerate().map(|(t, &v)| format!("{:.2},{:.2}", detail.x(t as f64), detail.y(v))).collect();
            pts.extend(hi.iter().enumerate().rev().map(|(t, &v)| format!("{:.2},{:.2}", detail.x(t as f64), detail.y(v))));
            let _ = writeln!(svg, r##"<polygon class="forecast-band" fill="#ff7f0e" fill-opacity="0.25" points="{}"/>"##, pts.join(" "));
        }
        let mean: Vec<(f64, f64)> = f.mean.iter().enumerate().map(|(t, &v)| (t as f64, v)).collect();
        detail.polyline(&mut svg, "forecast-mean", "#ff7f0e", &mean);
    }
    let x = detail.x(0.0);
    let _ = writeln!(svg, r##"<line class="horizon-start" x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="#999" stroke-dasharray="4 3"/>"##, detail.top, detail.top + PANEL);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{build_multires_window, Series};

    #[test]
    fn padded_coarse_prefix_is_highlighted() {
        let s = Series::new("s&1", 0, 60, (0..80).map(|i| (i as f64 * 0.3).sin()).collect());
        let w = build_multires_window(&s, 80, 32, 8, 4).unwrap();
        assert!(w.coarse_padding() > 0);
        let svg = render_window_svg(&w, None);
        assert!(svg.contains(r#"class="padding" data-context="coarse""#));
        assert!(svg.contains("s&amp;1"));
        assert!(!svg.contains(r#"data-context="fine""#));
    }
}
