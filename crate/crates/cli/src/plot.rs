//! Static three-panel SVG: reward with a 95% band, ln kappa, and the decayed
//! average fitting error, each against cumulative trajectories.

use std::fmt::Write as _;

use lmdp_npg::trainer::LogRow;

const WIDTH: f64 = 960.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 190.0;
const MARGIN_T: f64 = 30.0;
const GAP: f64 = 60.0;
const PALETTE: [&str; 9] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#17becf",
];

/// One line on the plot.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// Solid when true, dashed otherwise.
    pub solid: bool,
    pub rows: Vec<LogRow>,
}

#[derive(Clone, Copy)]
enum Metric {
    Reward,
    LnKappa,
    AvgErr,
}

impl Metric {
    fn title(self) -> &'static str {
        match self {
            Metric::Reward => "reward",
            Metric::LnKappa => "ln kappa",
            Metric::AvgErr => "avg err",
        }
    }

    fn value(self, r: &LogRow) -> f64 {
        match self {
            Metric::Reward => r.reward_mean,
            Metric::LnKappa => r.ln_kappa,
            Metric::AvgErr => r.avg_err,
        }
    }
}

struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = lo.abs().max(1.0) * 0.05;
            (lo - pad, hi + pad)
        };
        Self { lo, hi, a, b }
    }

    fn map(&self, x: f64) -> f64 {
        self.a + (x - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt_tick(x: f64) -> String {
    if x != 0.0 && (x.abs() >= 1e4 || x.abs() < 1e-2) {
        format!("{x:.1e}")
    } else {
        format!("{}", (x * 1000.0).round() / 1000.0)
    }
}

/// Renders the plot. Deterministic in its input.
pub fn render_svg(series: &[Series]) -> String {
    let height = MARGIN_T + 3.0 * PANEL_H + 2.0 * GAP + 50.0;
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let all = || series.iter().flat_map(|s| s.rows.iter());
    let x_lo = all().map(|r| r.samples_cumulative as f64).fold(f64::INFINITY, f64::min);
    let x_hi = all()
        .map(|r| r.samples_cumulative as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_lo.is_finite() { (x_lo, x_hi) } else { (0.0, 1.0) };
    let xs = Scale::new(x_lo, x_hi, MARGIN_L, MARGIN_L + plot_w);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (p, metric) in [Metric::Reward, Metric::LnKappa, Metric::AvgErr]
        .into_iter()
        .enumerate()
    {
        let top = MARGIN_T + p as f64 * (PANEL_H + GAP);
        let bottom = top + PANEL_H;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in all() {
            let v = metric.value(r);
            if v.is_finite() {
                let (a, b) = match metric {
                    Metric::Reward => (v - r.reward_ci95.max(0.0), v + r.reward_ci95.max(0.0)),
                    _ => (v, v),
                };
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        let ys = Scale::new(lo, hi, bottom, top);

        let _ = writeln!(
            svg,
            r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#333"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">{}</text>"#,
            MARGIN_L + plot_w / 2.0,
            top - 8.0,
            metric.title()
        );
        for k in 0..=4 {
            let v = ys.lo + (ys.hi - ys.lo) * k as f64 / 4.0;
            let y = ys.map(v);
            let _ = writeln!(
                svg,
                r##"<line x1="{}" y1="{y:.2}" x2="{MARGIN_L}" y2="{y:.2}" stroke="#333"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                MARGIN_L - 4.0,
                MARGIN_L - 6.0,
                y + 4.0,
                fmt_tick(v)
            );
            let xv = xs.lo + (xs.hi - xs.lo) * k as f64 / 4.0;
            let x = xs.map(xv);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{}" stroke="#333"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
                bottom + 4.0,
                bottom + 16.0,
                fmt_tick(xv)
            );
        }

        for (si, s) in series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let dash = if s.solid { "" } else { r#" stroke-dasharray="6,4""# };
            let pts: Vec<(f64, f64, &LogRow)> = s
                .rows
                .iter()
                .map(|r| (xs.map(r.samples_cumulative as f64), metric.value(r), r))
                .collect();

            if let Metric::Reward = metric {
                let band: Vec<(f64, f64, f64)> = pts
                    .iter()
                    .filter(|(_, v, r)| v.is_finite() && r.reward_ci95.is_finite())
                    .map(|&(x, v, r)| (x, ys.map(v + r.reward_ci95), ys.map(v - r.reward_ci95)))
                    .collect();
                if band.len() >= 2 {
                    let mut d = String::new();
                    for (i, (x, up, _)) in band.iter().enumerate() {
                        let _ = write!(d, "{}{x:.2},{up:.2} ", if i == 0 { "M" } else { "L" });
                    }
                    for (x, _, dn) in band.iter().rev() {
                        let _ = write!(d, "L{x:.2},{dn:.2} ");
                    }
                    let _ = writeln!(
                        svg,
                        r#"<path d="{}Z" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                        d
                    );
                }
            }

            // Split into runs of finite values.
            let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
            for &(x, v, _) in &pts {
                if v.is_finite() {
                    runs.last_mut().unwrap().push((x, ys.map(v)));
                } else if !runs.last().unwrap().is_empty() {
                    runs.push(Vec::new());
                }
            }
            for run in runs.iter().filter(|r| !r.is_empty()) {
                if run.len() == 1 {
                    let (x, y) = run[0];
                    let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
                } else {
                    let d: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        svg,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                        d.join(" ")
                    );
                }
            }

            if let Metric::LnKappa = metric {
                let clipped: Vec<f64> = pts
                    .iter()
                    .filter(|(_, v, _)| *v == f64::INFINITY)
                    .map(|p| p.0)
                    .collect();
                for x in &clipped {
                    let y = top + 6.0;
                    let _ = writeln!(
                        svg,
                        r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="{color}"><title>ln kappa = +inf</title></path>"#,
                        x - 4.0,
                        y + 6.0,
                        x + 4.0,
                        y + 6.0,
                        x,
                        y
                    );
                }
                if !clipped.is_empty() {
                    let _ = writeln!(
                        svg,
                        r#"<text x="{:.2}" y="{:.2}" fill="{color}" font-size="10">+inf (clipped)</text>"#,
                        clipped[0] + 6.0,
                        top + 12.0 + 11.0 * si as f64
                    );
                }
            }
        }
    }

    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">number of trajectories, i.e., number of episodes x horizon x batch size</text>"#,
        MARGIN_L + plot_w / 2.0,
        height - 12.0
    );

    let lx = WIDTH - MARGIN_R + 15.0;
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let y = MARGIN_T + 10.0 + 20.0 * si as f64;
        let dash = if s.solid { "" } else { r#" stroke-dasharray="6,4""# };
        let _ = writeln!(
            svg,
            r#"<g class="legend"><line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text></g>"#,
            lx + 28.0,
            lx + 34.0,
            y + 4.0,
            esc(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
