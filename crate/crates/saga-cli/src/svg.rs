//! Self-contained SVG line charts: axes, ticks, polylines, legend. No
//! plotting dependency — everything the reports need is a handful of
//! polylines.

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl LineChart {
    pub fn render(&self) -> String {
        let tx = |v: f64| if self.log_x { v.ln() } else { v };
        let ty = |v: f64| if self.log_y { v.max(f64::MIN_POSITIVE).ln() } else { v };

        let xs: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| tx(p.0)))
            .collect();
        let ys: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| ty(p.1)))
            .collect();
        let (x_min, x_max) = span(&xs);
        let (y_min, y_max) = span(&ys);

        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let px = |v: f64| MARGIN_L + (tx(v) - x_min) / (x_max - x_min) * plot_w;
        let py = |v: f64| MARGIN_T + plot_h - (ty(v) - y_min) / (y_max - y_min) * plot_h;

        let mut out = String::new();
        out.push_str(&format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        ));
        out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        out.push_str(&format!(
            r#"<text x="{}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        ));

        // Axes.
        out.push_str(&format!(
            r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>"#,
            l = MARGIN_L,
            r = MARGIN_L + plot_w,
            t = MARGIN_T,
            b = MARGIN_T + plot_h,
        ));

        // Ticks: evenly spaced in transformed coordinates, labeled with the
        // original values.
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let vx = x_min + f * (x_max - x_min);
            let raw_x = if self.log_x { vx.exp() } else { vx };
            let gx = MARGIN_L + f * plot_w;
            out.push_str(&format!(
                r#"<line x1="{gx}" y1="{b}" x2="{gx}" y2="{b2}" stroke="black"/><text x="{gx}" y="{ly}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                tick_label(raw_x),
                b = MARGIN_T + plot_h,
                b2 = MARGIN_T + plot_h + 5.0,
                ly = MARGIN_T + plot_h + 18.0,
            ));

            let vy = y_min + f * (y_max - y_min);
            let raw_y = if self.log_y { vy.exp() } else { vy };
            let gy = MARGIN_T + plot_h - f * plot_h;
            out.push_str(&format!(
                r#"<line x1="{l2}" y1="{gy}" x2="{l}" y2="{gy}" stroke="black"/><text x="{lx}" y="{ty}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                tick_label(raw_y),
                l = MARGIN_L,
                l2 = MARGIN_L - 5.0,
                lx = MARGIN_L - 8.0,
                ty = gy + 4.0,
            ));
        }
        out.push_str(&format!(
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN_L + plot_w / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            escape(&self.y_label)
        ));

        // Series polylines and legend.
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            out.push_str(&format!(
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#,
                pts.join(" ")
            ));
            for &(x, y) in &series.points {
                out.push_str(&format!(
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.6" fill="{color}"/>"#,
                    px(x),
                    py(y)
                ));
            }
            let ly = MARGIN_T + 16.0 * i as f64 + 10.0;
            let lx = MARGIN_L + plot_w + 12.0;
            out.push_str(&format!(
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&series.name)
            ));
        }

        out.push_str("</svg>\n");
        out
    }
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a >= 1.0 && a < 1e7 && (v - v.round()).abs() < 1e-9 * a.max(1.0) {
        format!("{}", v.round() as i64)
    } else if a >= 0.01 && a < 1e7 {
        format!("{:.2}", v)
    } else {
        format!("{:.2e}", v)
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let chart = LineChart {
            title: "test".into(),
            x_label: "N".into(),
            y_label: "ns".into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series {
                    name: "a".into(),
                    points: vec![(256.0, 1e3), (1024.0, 4e3), (4096.0, 1.6e4)],
                },
                Series {
                    name: "b".into(),
                    points: vec![(256.0, 1e3), (1024.0, 1.6e4), (4096.0, 2.6e5)],
                },
            ],
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("256"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let chart = LineChart {
            title: "flat".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            log_y: false,
            series: vec![Series {
                name: "c".into(),
                points: vec![(1.0, 5.0), (2.0, 5.0)],
            }],
        };
        let svg = chart.render();
        assert!(!svg.contains("NaN"));
    }
}
