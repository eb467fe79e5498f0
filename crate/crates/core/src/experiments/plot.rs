//! Small deterministic SVG charts: bars with CI whiskers and line series.
//! Output depends only on the input numbers, so reruns are byte-identical.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 80.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean: f64,
    /// Half-width of the error bar; 0 draws none.
    pub ci: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, y, ci half-width)`.
    pub points: Vec<(f64, f64, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Axis { lo: lo - pad, hi: hi + pad }
    }

    fn with_zero(mut self) -> Self {
        self.lo = self.lo.min(0.0);
        self.hi = self.hi.max(0.0);
        self
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn y_px(axis: &Axis, v: f64) -> f64 {
    TOP + (H - TOP - BOTTOM) * (axis.hi - v) / (axis.hi - axis.lo)
}

fn x_px(axis: &Axis, v: f64) -> f64 {
    LEFT + (W - LEFT - RIGHT) * (v - axis.lo) / (axis.hi - axis.lo)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(svg: &mut String, title: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn y_axis(svg: &mut String, axis: &Axis) {
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#, H - BOTTOM);
    for t in axis.ticks() {
        let y = y_px(axis, t);
        let _ = writeln!(svg, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, W - RIGHT);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.2}</text>"#, LEFT - 6.0, y + 4.0);
    }
}

fn whisker(svg: &mut String, x: f64, y_lo: f64, y_hi: f64) {
    let _ = writeln!(svg, r#"<line x1="{x:.1}" y1="{y_lo:.1}" x2="{x:.1}" y2="{y_hi:.1}" stroke="black"/>"#);
    for y in [y_lo, y_hi] {
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black"/>"#, x - 4.0, x + 4.0);
    }
}

pub fn bar_chart(title: &str, ylabel: &str, bars: &[Bar]) -> String {
    let axis = Axis::fit(bars.iter().flat_map(|b| [b.mean - b.ci, b.mean + b.ci])).with_zero();
    let mut svg = String::new();
    header(&mut svg, title, ylabel);
    y_axis(&mut svg, &axis);
    let slot = (W - LEFT - RIGHT) / bars.len().max(1) as f64;
    let zero = y_px(&axis, 0.0);
    for (i, b) in bars.iter().enumerate() {
        let x = LEFT + slot * (i as f64 + 0.5);
        let y = y_px(&axis, b.mean);
        let (top, height) = if y < zero { (y, zero - y) } else { (zero, y - zero) };
        let _ = writeln!(
            svg,
            r#"<rect x="{:.1}" y="{top:.1}" width="{:.1}" height="{height:.1}" fill="{}"/>"#,
            x - slot * 0.3,
            slot * 0.6,
            COLORS[i % COLORS.len()]
        );
        if b.ci > 0.0 {
            whisker(&mut svg, x, y_px(&axis, b.mean - b.ci), y_px(&axis, b.mean + b.ci));
        }
        let _ = writeln!(
            svg,
            r#"<text transform="translate({x:.1} {:.1}) rotate(30)">{}</text>"#,
            H - BOTTOM + 14.0,
            escape(&b.label)
        );
    }
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{zero:.1}" x2="{:.1}" y2="{zero:.1}" stroke="black"/>"#, W - RIGHT);
    svg.push_str("</svg>\n");
    svg
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xs = Axis::fit(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = Axis::fit(series.iter().flat_map(|s| s.points.iter().flat_map(|p| [p.1 - p.2, p.1 + p.2])));
    let mut svg = String::new();
    header(&mut svg, title, ylabel);
    y_axis(&mut svg, &ys);
    let base = H - BOTTOM;
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{base}" x2="{:.1}" y2="{base}" stroke="black"/>"#, W - RIGHT);
    for t in xs.ticks() {
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.2}</text>"#, x_px(&xs, t), base + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, base + 36.0, escape(xlabel));
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s.points.iter().map(|p| format!("{:.1},{:.1}", x_px(&xs, p.0), y_px(&ys, p.1))).collect();
        if path.len() > 1 {
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        }
        for p in &s.points {
            let (x, y) = (x_px(&xs, p.0), y_px(&ys, p.1));
            let _ = writeln!(svg, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{color}"/>"#);
            if p.2 > 0.0 {
                whisker(&mut svg, x, y_px(&ys, p.1 - p.2), y_px(&ys, p.1 + p.2));
            }
        }
        let ly = TOP + 14.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/>"#, W - RIGHT - 150.0, ly);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, W - RIGHT - 135.0, ly + 9.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bars() -> Vec<Bar> {
        vec![
            Bar { label: "none".into(), mean: 0.7, ci: 0.05 },
            Bar { label: "adversarial".into(), mean: -0.58, ci: 0.1 },
        ]
    }

    #[test]
    fn rendering_is_deterministic() {
        assert_eq!(bar_chart("t", "r", &bars()), bar_chart("t", "r", &bars()));
        let s = vec![Series { name: "a".into(), points: vec![(1.0, 2.0, 0.1), (2.0, 3.0, 0.0)] }];
        assert_eq!(line_chart("t", "x", "y", &s), line_chart("t", "x", "y", &s));
    }

    #[test]
    fn one_whisker_per_nonzero_ci() {
        let svg = bar_chart("t", "r", &bars());
        assert_eq!(svg.matches("<rect").count(), 3);
        // Each whisker is one vertical and two horizontal strokes.
        let single = line_chart("t", "x", "y", &[Series { name: "only".into(), points: vec![(1.0, 1.0, 0.2)] }]);
        assert_eq!(single.matches("<circle").count(), 1);
        assert!(single.contains("only"));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = bar_chart("a<b", "r", &[Bar { label: "x&y".into(), mean: 1.0, ci: 0.0 }]);
        assert!(svg.contains("a&lt;b") && svg.contains("x&amp;y"));
    }
}
