//! Static SVG line charts for trajectory logs.
//!
//! Output depends only on the data, so identical logs give identical files.

use std::fmt::Write as _;

use crate::sim::TrajectoryLog;

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 200.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 36.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Drawn dashed, used for desired and true reference signals.
    pub dashed: bool,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>, dashed: bool) -> Self {
        Self {
            name: name.into(),
            points,
            dashed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub series: Vec<Series>,
}

/// Panels stacked vertically in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub panels: Vec<Panel>,
}

/// Tick positions covering `[lo, hi]` at a 1-2-5 step.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.4}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn bounds(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let pts = panel.series.iter().flat_map(|s| s.points.iter());
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    for &(px, py) in pts.filter(|(a, b)| a.is_finite() && b.is_finite()) {
        x = (x.0.min(px), x.1.max(px));
        y = (y.0.min(py), y.1.max(py));
    }
    let widen = |(lo, hi): (f64, f64)| {
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo <= 1e-12 * lo.abs().max(1.0) {
            (lo - 0.5 * lo.abs().max(1.0), hi + 0.5 * hi.abs().max(1.0))
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let x = if x.0.is_finite() && x.1 > x.0 { x } else { widen(x) };
    (x, widen(y))
}

fn render_panel(svg: &mut String, panel: &Panel, top: f64) {
    let ((x0, x1), (y0, y1)) = bounds(panel);
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| top + MARGIN_T + (y1 - y) / (y1 - y0) * plot_h;
    let w = |svg: &mut String, s: String| svg.push_str(&s);

    w(
        svg,
        format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + plot_w / 2.0,
            top + 18.0,
            escape(&panel.title)
        ),
    );
    w(
        svg,
        format!(
            "<rect x=\"{MARGIN_L:.1}\" y=\"{:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#000\"/>\n",
            top + MARGIN_T
        ),
    );
    for t in ticks(x0, x1) {
        let px = sx(t);
        let base = top + MARGIN_T + plot_h;
        w(svg, format!("<line x1=\"{px:.1}\" y1=\"{base:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#000\"/>\n", base + 5.0));
        w(
            svg,
            format!(
                "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                base + 17.0,
                tick_label(t)
            ),
        );
    }
    for t in ticks(y0, y1) {
        let py = sy(t);
        w(svg, format!("<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{MARGIN_L:.1}\" y2=\"{py:.1}\" stroke=\"#000\"/>\n", MARGIN_L - 5.0));
        w(
            svg,
            format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                MARGIN_L - 8.0,
                py + 4.0,
                tick_label(t)
            ),
        );
    }
    w(
        svg,
        format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + plot_w / 2.0,
            top + PANEL_H - 4.0,
            escape(&panel.x_label)
        ),
    );

    let mut legend_y = top + MARGIN_T + 14.0;
    for (i, s) in panel.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
        let mut pts: Vec<(f64, f64)> = s.points.iter().step_by(stride).copied().collect();
        if let Some(last) = s.points.last() {
            if pts.last() != Some(last) {
                pts.push(*last);
            }
        }
        pts.retain(|(a, b)| a.is_finite() && b.is_finite());
        if pts.len() >= 2 {
            let mut d = String::new();
            for (x, y) in &pts {
                write!(d, "{:.2},{:.2} ", sx(*x), sy(*y)).expect("writing to a String");
            }
            w(
                svg,
                format!(
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>\n",
                    d.trim_end()
                ),
            );
        }
        let lx = MARGIN_L + plot_w - 130.0;
        w(
            svg,
            format!(
                "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"1.5\"{dash}/>\n",
                legend_y - 4.0,
                lx + 24.0,
                legend_y - 4.0
            ),
        );
        w(
            svg,
            format!(
                "<text x=\"{:.1}\" y=\"{legend_y:.1}\" font-size=\"11\">{}</text>\n",
                lx + 30.0,
                escape(&s.name)
            ),
        );
        legend_y += 14.0;
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn to_svg(&self) -> String {
        let height = PANEL_H * self.panels.len().max(1) as f64;
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {PANEL_W:.0} {height:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
        );
        for (i, p) in self.panels.iter().enumerate() {
            render_panel(&mut svg, p, i as f64 * PANEL_H);
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn time_series(log: &TrajectoryLog, name: &str) -> Option<Vec<(f64, f64)>> {
    let t = log.column("t")?;
    let v = log.column(name)?;
    Some(t.into_iter().zip(v).collect())
}

fn panel(title: &str, series: Vec<Series>) -> Panel {
    Panel {
        title: title.to_string(),
        x_label: "t [s]".to_string(),
        series,
    }
}

/// State column a reference column tracks: `gamma_d` tracks `gamma`,
/// `q_dx` tracks `q_x`.
fn tracked_state(reference: &str) -> String {
    match reference.strip_suffix("_d") {
        Some(s) => s.to_string(),
        None => reference.replacen("_d", "_", 1),
    }
}

/// The standard figure set for one run, as `(suffix, figure)` pairs:
/// states, controls, barrier values, estimates and the error bound.
pub fn figure_set(log: &TrajectoryLog, state_names: &[&str], input_names: &[&str], reference_names: &[&str]) -> Vec<(String, Figure)> {
    let mut figs = Vec::new();
    let series = |name: &str, label: &str, dashed: bool| {
        time_series(log, name).map(|pts| Series::new(label, pts, dashed))
    };

    let states = state_names
        .iter()
        .map(|s| {
            let mut list: Vec<Series> = series(s, s, false).into_iter().collect();
            for r in reference_names.iter().filter(|r| tracked_state(r) == *s) {
                list.extend(series(r, r, true));
            }
            panel(s, list)
        })
        .collect();
    figs.push(("states".to_string(), Figure { panels: states }));

    let controls = input_names
        .iter()
        .map(|u| {
            let desired = format!("{u}_d");
            let list = series(u, u, false).into_iter().chain(series(&desired, &desired, true)).collect();
            panel(u, list)
        })
        .collect();
    figs.push(("controls".to_string(), Figure { panels: controls }));

    let mut safety = Vec::new();
    let mut i = 0;
    while log.column_index(&format!("psi{i}")).is_some() {
        let name = format!("psi{i}");
        safety.push(panel(&name, series(&name, &name, false).into_iter().collect()));
        i += 1;
    }
    safety.push(panel("psi", series("psi", "psi", false).into_iter().collect()));
    figs.push(("safety".to_string(), Figure { panels: safety }));

    let theta = (0..log.theta_star.len())
        .map(|j| {
            let name = format!("theta{j}");
            let mut list: Vec<Series> = series(&name, &name, false).into_iter().collect();
            if let Some(t) = log.column("t") {
                let star = log.theta_star[j];
                let pts = vec![(t[0], star), (*t.last().expect("nonempty"), star)];
                list.push(Series::new(format!("{name}*"), pts, true));
            }
            panel(&name, list)
        })
        .collect();
    figs.push(("theta".to_string(), Figure { panels: theta }));

    let nu = panel(
        "nu",
        series("nu", "nu", false)
            .into_iter()
            .chain(series("theta_err", "|theta - theta*|", true))
            .collect(),
    );
    figs.push(("nu".to_string(), Figure { panels: vec![nu] }));
    figs
}
