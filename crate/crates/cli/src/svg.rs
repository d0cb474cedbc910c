//! Standalone SVG phase portraits.

use std::fmt::Write as _;

use milnor_core::ode::Trajectory;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
/// Half-width of the square around the origin shown magnified in the inset.
pub const INSET_HALF_WIDTH: f64 = 2e-4;
const INSET_SIZE: f64 = 150.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Viewport {
    /// Bounding box of the first two components, padded by 5%.
    pub fn fit(trajectories: &[Trajectory]) -> Option<Self> {
        let mut points = trajectories.iter().flat_map(|t| t.states.iter().map(|s| (s[0], s[1])));
        let (x, y) = points.next()?;
        let mut v = Self {
            x_min: x,
            x_max: x,
            y_min: y,
            y_max: y,
        };
        for (x, y) in points {
            v.x_min = v.x_min.min(x);
            v.x_max = v.x_max.max(x);
            v.y_min = v.y_min.min(y);
            v.y_max = v.y_max.max(y);
        }
        let pad_x = 0.05 * (v.x_max - v.x_min).max(1e-12);
        let pad_y = 0.05 * (v.y_max - v.y_min).max(1e-12);
        Some(Self {
            x_min: v.x_min - pad_x,
            x_max: v.x_max + pad_x,
            y_min: v.y_min - pad_y,
            y_max: v.y_max + pad_y,
        })
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max].iter().all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub viewport: Viewport,
    pub x_label: String,
    pub y_label: String,
    /// Adds a magnified panel of `[-2e-4, 2e-4]^2`.
    pub inset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SvgError {
    Empty,
    BadViewport,
}

impl std::fmt::Display for SvgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SvgError::Empty => f.write_str("nothing to plot: no trajectories"),
            SvgError::BadViewport => f.write_str("viewport must be finite with positive extent"),
        }
    }
}

/// Maps a viewport onto a pixel rectangle `(left, top, width, height)`.
struct Frame {
    view: Viewport,
    left: f64,
    top: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let v = &self.view;
        (
            self.left + (x - v.x_min) / (v.x_max - v.x_min) * self.width,
            self.top + (v.y_max - y) / (v.y_max - v.y_min) * self.height,
        )
    }

    /// Polylines of the runs of consecutive in-view samples; false if none are in view.
    fn polylines(&self, traj: &Trajectory, color: &str, out: &mut String) -> bool {
        let mut any = false;
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, out: &mut String| {
            if run.len() >= 2 {
                let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            run.clear();
        };
        for s in &traj.states {
            if self.view.contains(s[0], s[1]) {
                any = true;
                run.push(self.px(s[0], s[1]));
            } else {
                flush(&mut run, out);
            }
        }
        flush(&mut run, out);
        any
    }
}

/// Tick positions at 1, 2 or 5 times a power of ten, about five per axis.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let scale = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * scale).find(|s| *s >= raw).unwrap_or(10.0 * scale);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders the first two components of each trajectory as a phase portrait.
pub fn emit_svg(trajectories: &[Trajectory], options: &PlotOptions) -> Result<String, SvgError> {
    if trajectories.is_empty() || trajectories.iter().any(|t| t.dim() < 2) {
        return Err(SvgError::Empty);
    }
    let view = options.viewport;
    if !view.is_valid() {
        return Err(SvgError::BadViewport);
    }
    let main = Frame {
        view,
        left: MARGIN,
        top: MARGIN / 2.0,
        width: WIDTH - 1.5 * MARGIN,
        height: HEIGHT - 1.5 * MARGIN,
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        main.left, main.top, main.width, main.height
    );

    let bottom = main.top + main.height;
    for x in ticks(view.x_min, view.x_max) {
        let (px, _) = main.px(x, view.y_min);
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{bottom:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, bottom + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            tick_label(x)
        );
    }
    for y in ticks(view.y_min, view.y_max) {
        let (_, py) = main.px(view.x_min, y);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/>"#,
            main.left - 4.0,
            main.left
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            main.left - 6.0,
            py + 4.0,
            tick_label(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        main.left + main.width / 2.0,
        HEIGHT - 6.0,
        escape(&options.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        main.top + main.height / 2.0,
        main.top + main.height / 2.0,
        escape(&options.y_label)
    );

    let mut visible = false;
    for (i, traj) in trajectories.iter().enumerate() {
        visible |= main.polylines(traj, PALETTE[i % PALETTE.len()], &mut out);
    }
    if !visible {
        out.push_str("<!-- clipped-empty: no trajectory samples inside the viewport -->\n");
    }
    if view.contains(0.0, 0.0) {
        let (ox, oy) = main.px(0.0, 0.0);
        let _ = writeln!(out, r#"<circle cx="{ox:.2}" cy="{oy:.2}" r="3" fill="black"/>"#);
    }

    if options.inset {
        let h = INSET_HALF_WIDTH;
        let inset = Frame {
            view: Viewport {
                x_min: -h,
                x_max: h,
                y_min: -h,
                y_max: h,
            },
            left: main.left + main.width - INSET_SIZE - 8.0,
            top: main.top + 8.0,
            width: INSET_SIZE,
            height: INSET_SIZE,
        };
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{INSET_SIZE}" height="{INSET_SIZE}" fill="white" stroke="black"/>"#,
            inset.left, inset.top
        );
        for (i, traj) in trajectories.iter().enumerate() {
            inset.polylines(traj, PALETTE[i % PALETTE.len()], &mut out);
        }
        let (ox, oy) = inset.px(0.0, 0.0);
        let _ = writeln!(out, r#"<circle cx="{ox:.2}" cy="{oy:.2}" r="2" fill="black"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">[-2e-4, 2e-4]²</text>"#,
            inset.left + INSET_SIZE / 2.0,
            inset.top + INSET_SIZE + 12.0
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
