//! Minimal static SVG line charts with optional shaded error bands.

use std::fmt::Write;

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Half-width of a shaded band around `y`.
    pub band: Option<Vec<f64>>,
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            x,
            y,
            ..Series::default()
        }
    }

    pub fn with_band(mut self, band: Vec<f64>) -> Self {
        self.band = Some(band);
        self
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.x.iter().zip(&self.y).enumerate().filter_map(move |(i, (&x, &y))| {
            let b = self.band.as_ref().map_or(0.0, |b| b[i]);
            (x.is_finite() && y.is_finite() && b.is_finite()).then_some((x, y, b))
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub y_range: Option<(f64, f64)>,
    pub series: Vec<Series>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn t(&self, v: f64) -> f64 {
        let (v, lo, hi) = if self.log {
            (v.log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        if hi == lo {
            0.5
        } else {
            (v - lo) / (hi - lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let a = self.lo.log10().floor() as i32;
            let b = self.hi.log10().ceil() as i32;
            (a..=b)
                .map(|e| 10f64.powi(e))
                .filter(|v| *v >= self.lo * 0.999 && *v <= self.hi * 1.001)
                .collect()
        } else {
            let span = (self.hi - self.lo).max(1e-12);
            let raw = span / 5.0;
            let mag = 10f64.powf(raw.log10().floor());
            let step = [1.0, 2.0, 5.0, 10.0]
                .iter()
                .map(|m| m * mag)
                .find(|s| span / s <= 6.0)
                .unwrap_or(10.0 * mag);
            let start = (self.lo / step).ceil() as i64;
            let end = (self.hi / step).floor() as i64;
            (start..=end).map(|k| k as f64 * step).collect()
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    vals.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

fn render_panel(out: &mut String, p: &Panel, top: f64) {
    let pts: Vec<(f64, f64, f64)> = p.series.iter().flat_map(|s| s.points()).collect();
    let (x0, x1) = extent(pts.iter().map(|q| q.0).filter(|x| !p.log_x || *x > 0.0)).unwrap_or((0.0, 1.0));
    let (y0, y1) = p.y_range.unwrap_or_else(|| {
        let (a, b) = extent(pts.iter().flat_map(|q| [q.1 - q.2, q.1 + q.2])).unwrap_or((0.0, 1.0));
        let pad = ((b - a) * 0.05).max(1e-3);
        (a - pad, b + pad)
    });
    let xa = Axis {
        lo: x0,
        hi: x1,
        log: p.log_x,
    };
    let ya = Axis {
        lo: y0,
        hi: y1,
        log: false,
    };
    let w = PANEL_W - MARGIN_L - MARGIN_R;
    let h = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + xa.t(x) * w;
    let sy = |y: f64| top + MARGIN_T + (1.0 - ya.t(y)) * h;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_L + w / 2.0,
        top + 22.0,
        escape(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L:.1}" y="{:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="#333"/>"##,
        top + MARGIN_T
    );
    for t in xa.ticks() {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"##,
            top + MARGIN_T,
            top + MARGIN_T + h,
            top + MARGIN_T + h + 16.0,
            fmt_tick(t)
        );
    }
    for t in ya.ticks() {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"##,
            MARGIN_L + w,
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        MARGIN_L + w / 2.0,
        top + PANEL_H - 10.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        top + MARGIN_T + h / 2.0,
        top + MARGIN_T + h / 2.0,
        escape(&p.y_label)
    );

    for (k, s) in p.series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<_> = s.points().filter(|q| !p.log_x || q.0 > 0.0).collect();
        if pts.is_empty() {
            continue;
        }
        if s.band.is_some() {
            let upper = pts.iter().map(|q| format!("{:.1},{:.1}", sx(q.0), sy(q.1 + q.2)));
            let lower = pts.iter().rev().map(|q| format!("{:.1},{:.1}", sx(q.0), sy(q.1 - q.2)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = pts.iter().map(|q| format!("{:.1},{:.1}", sx(q.0), sy(q.1))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
            line.join(" ")
        );
        for q in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{colour}"/>"#,
                sx(q.0),
                sy(q.1)
            );
        }
        let ly = top + MARGIN_T + 14.0 + 18.0 * k as f64;
        let lx = MARGIN_L + w + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
}

/// Stacks the panels vertically in one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W:.0}" height="{height:.0}" viewBox="0 0 {PANEL_W:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_H);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(log_x: bool) -> Panel {
        Panel {
            title: "acc <test>".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x,
            y_range: None,
            series: vec![
                Series::new("a", vec![10.0, 100.0, 1000.0], vec![0.5, 0.8, 0.9]).with_band(vec![0.1, 0.05, 0.01]),
                Series::new("b", vec![10.0, f64::INFINITY], vec![0.7, 0.7]).dashed(),
            ],
        }
    }

    #[test]
    fn renders_well_formed_svg() {
        let s = render(&[panel(true), panel(false)]);
        assert!(s.starts_with("<svg"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polygon").count(), 2);
        assert_eq!(s.matches("<polyline").count(), 4);
        assert!(s.contains("acc &lt;test&gt;"));
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }

    #[test]
    fn output_is_deterministic() {
        assert_eq!(render(&[panel(true)]), render(&[panel(true)]));
    }

    #[test]
    fn tick_choices() {
        let a = Axis {
            lo: 0.0,
            hi: 1.0,
            log: false,
        };
        assert_eq!(a.ticks(), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        let l = Axis {
            lo: 10.0,
            hi: 3000.0,
            log: true,
        };
        assert_eq!(l.ticks(), vec![10.0, 100.0, 1000.0]);
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(20.0), "20");
    }
}
