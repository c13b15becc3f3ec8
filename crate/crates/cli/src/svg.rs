//! Minimal line charts as standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub color: &'a str,
}

pub struct Rule<'a> {
    pub at: f64,
    pub label: &'a str,
    pub color: &'a str,
}

#[derive(Default)]
pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub series: Vec<Series<'a>>,
    /// Vertical rules at x positions.
    pub marks: Vec<Rule<'a>>,
    /// Horizontal rules at y values.
    pub levels: Vec<Rule<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

impl Chart<'_> {
    fn x_extent(&self) -> f64 {
        let n = self.series.iter().map(|s| s.values.len()).max().unwrap_or(0);
        let marks = self.marks.iter().map(|m| m.at).fold(0.0, f64::max);
        ((n.max(1) - 1) as f64).max(marks).max(1.0)
    }

    fn y_extent(&self) -> (f64, f64) {
        let values = self
            .series
            .iter()
            .flat_map(|s| s.values.iter().copied())
            .chain(self.levels.iter().map(|l| l.at))
            .filter(|v| v.is_finite());
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            return (lo - 1.0, hi + 1.0);
        }
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }

    pub fn render(&self) -> String {
        let plot_w = WIDTH - LEFT - RIGHT;
        let plot_h = HEIGHT - TOP - BOTTOM;
        let x_max = self.x_extent();
        let (y_lo, y_hi) = self.y_extent();
        let px = |x: f64| LEFT + x / x_max * plot_w;
        let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            LEFT + plot_w / 2.0,
            escape(self.title)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for i in 0..=TICKS {
            let f = i as f64 / TICKS as f64;
            let y = y_lo + f * (y_hi - y_lo);
            let x = f * x_max;
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
                LEFT - 6.0,
                py(y) + 4.0,
                y
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.0}</text>"#,
                px(x),
                TOP + plot_h + 18.0,
                x
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            HEIGHT - 10.0,
            escape(self.x_label)
        );

        for level in &self.levels {
            let y = py(level.at);
            let _ = writeln!(
                out,
                r#"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="{}" stroke-dasharray="6 4"/>"#,
                LEFT + plot_w,
                level.color
            );
        }
        for mark in &self.marks {
            let x = px(mark.at);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.1}" y1="{TOP}" x2="{x:.1}" y2="{}" stroke="{}" stroke-dasharray="4 3"/>"#,
                TOP + plot_h,
                mark.color
            );
        }
        for s in &self.series {
            let points: Vec<String> = s
                .values
                .iter()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .map(|(i, &v)| format!("{:.1},{:.1}", px(i as f64), py(v)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                s.color,
                points.join(" ")
            );
        }

        let legend = self
            .series
            .iter()
            .map(|s| (s.name, s.color, false))
            .chain(self.levels.iter().chain(&self.marks).map(|r| (r.label, r.color, true)));
        for (i, (name, color, dashed)) in legend.enumerate() {
            let y = TOP + 10.0 + 18.0 * i as f64;
            let x = LEFT + plot_w + 12.0;
            let dash = if dashed { r#" stroke-dasharray="4 3""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/>"#,
                x + 20.0
            );
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(name));
        }
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let a = [0.0, 1.0, 2.0];
        let b = [2.0, 1.0, f64::NAN];
        let chart = Chart {
            title: "a < b",
            x_label: "index",
            series: vec![
                Series { name: "a", values: &a, color: "red" },
                Series { name: "b", values: &b, color: "blue" },
            ],
            marks: vec![Rule { at: 1.0, label: "onset", color: "gray" }],
            ..Chart::default()
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn flat_series_gets_a_nonzero_range() {
        let a = [3.0; 4];
        let chart = Chart {
            series: vec![Series { name: "a", values: &a, color: "red" }],
            ..Chart::default()
        };
        assert_eq!(chart.y_extent(), (2.0, 4.0));
    }
}
