//! Line charts of recorded runs as standalone SVG.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hyfl::metrics::history::read_rows;
use hyfl::metrics::{moving_average, relative_loss, relative_measures, IterationRecord};

use crate::{CliError, CliResult};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 620.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 340.0;
const TICKS: usize = 5;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum XAxis {
    /// Relative iteration `t_R`.
    #[default]
    Iteration,
    /// Relative simulated time `T_R`.
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Moving-average window; 1 leaves the series as recorded.
    pub window: usize,
    pub x_axis: XAxis,
    /// Plot `P_R` against this optimum instead of raw `P`.
    pub p_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panels {
    pub loss: Vec<Series>,
    pub accuracy: Vec<Series>,
    pub x_label: &'static str,
    pub loss_label: &'static str,
    /// Common length when the inputs had to be cut to the shortest run.
    pub truncated_to: Option<usize>,
}

/// Smoothed loss and accuracy series for each labelled run, cut to the
/// shortest run.
pub fn build_panels(runs: &[(String, Vec<IterationRecord>)], opts: &PlotOptions) -> CliResult<Panels> {
    if runs.is_empty() {
        return Err(CliError::Config("plot needs at least one run".into()));
    }
    let len = runs.iter().map(|(_, r)| r.len()).min().unwrap_or(0);
    if len == 0 {
        return Err(CliError::Config("cannot plot an empty run".into()));
    }
    let truncated_to = runs.iter().any(|(_, r)| r.len() != len).then_some(len);
    let rows: Vec<&[IterationRecord]> = runs.iter().map(|(_, r)| &r[..len]).collect();
    let cum: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x.cum_s).collect()).collect();
    let rel = relative_measures(&cum, opts.window);
    let mut loss = Vec::with_capacity(runs.len());
    let mut accuracy = Vec::with_capacity(runs.len());
    for (((label, _), r), m) in runs.iter().zip(&rows).zip(rel) {
        let x = match opts.x_axis {
            XAxis::Iteration => m.iteration,
            XAxis::Time => m.time,
        };
        let p: Vec<f64> = match opts.p_star {
            Some(ps) => r.iter().map(|v| relative_loss(v.primal, ps)).collect::<hyfl::Result<_>>()?,
            None => r.iter().map(|v| v.primal).collect(),
        };
        let acc: Vec<f64> = r.iter().map(|v| v.accuracy).collect();
        loss.push(Series { label: label.clone(), x: x.clone(), y: moving_average(&p, opts.window) });
        accuracy.push(Series { label: label.clone(), x, y: moving_average(&acc, opts.window) });
    }
    Ok(Panels {
        loss,
        accuracy,
        x_label: match opts.x_axis {
            XAxis::Iteration => "relative iteration t_R",
            XAxis::Time => "relative time T_R",
        },
        loss_label: if opts.p_star.is_some() { "relative loss P_R" } else { "primal objective P" },
        truncated_to,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        return "0".into();
    }
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.05 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

/// One chart, one polyline per series, axes with five ticks and a legend.
/// Non-finite points are skipped.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y0, y1) = range(series.iter().flat_map(|s| s.y.iter().copied()));
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);
    let mid_x = (LEFT + RIGHT) / 2.0;
    let mid_y = (TOP + BOTTOM) / 2.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{mid_x}" y="22" text-anchor="middle" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{BOTTOM}" x2="{RIGHT}" y2="{BOTTOM}"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{BOTTOM}"/>"#);
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let (tx, ty) = (LEFT + f * (RIGHT - LEFT), BOTTOM - f * (BOTTOM - TOP));
        let _ = writeln!(s, r#"<line x1="{tx:.2}" y1="{BOTTOM}" x2="{tx:.2}" y2="{}"/>"#, BOTTOM + 5.0);
        let _ = writeln!(s, r#"<line x1="{}" y1="{ty:.2}" x2="{LEFT}" y2="{ty:.2}"/>"#, LEFT - 5.0);
    }
    let _ = writeln!(s, "</g>");
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let (tx, ty) = (LEFT + f * (RIGHT - LEFT), BOTTOM - f * (BOTTOM - TOP));
        let _ = writeln!(
            s,
            r#"<text x="{tx:.2}" y="{}" text-anchor="middle">{}</text>"#,
            BOTTOM + 18.0,
            tick_label(x0 + f * (x1 - x0))
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            ty + 4.0,
            tick_label(y0 + f * (y1 - y0))
        );
    }
    let _ = writeln!(s, r#"<text x="{mid_x}" y="{}" text-anchor="middle">{}</text>"#, HEIGHT - 18.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{mid_y}" text-anchor="middle" transform="rotate(-90 18 {mid_y})">{}</text>"#,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ser
            .x
            .iter()
            .zip(&ser.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&ser.label),
            pts.join(" ")
        );
        let ly = TOP + 12.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            RIGHT - 130.0,
            RIGHT - 110.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, RIGHT - 104.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Reads history CSVs (label = file stem), writes `loss.svg` and
/// `accuracy.svg` into `out_dir`.
pub fn cmd_plot(inputs: &[PathBuf], opts: &PlotOptions, out_dir: &Path) -> CliResult<(Panels, Vec<PathBuf>)> {
    let mut runs = Vec::with_capacity(inputs.len());
    for p in inputs {
        let f = File::open(p).map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
        let rows = read_rows(BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        runs.push((label, rows));
    }
    let panels = build_panels(&runs, opts)?;
    if let Some(n) = panels.truncated_to {
        log::warn!("runs have different lengths; truncating all to the shortest ({n} iterations)");
    }
    std::fs::create_dir_all(out_dir)?;
    let loss_path = out_dir.join("loss.svg");
    let acc_path = out_dir.join("accuracy.svg");
    let title = if opts.window > 1 { format!(" (moving average, window {})", opts.window) } else { String::new() };
    std::fs::write(
        &loss_path,
        render_svg(&format!("Loss{title}"), panels.x_label, panels.loss_label, &panels.loss),
    )?;
    std::fs::write(&acc_path, render_svg(&format!("Accuracy{title}"), panels.x_label, "accuracy", &panels.accuracy))?;
    Ok((panels, vec![loss_path, acc_path]))
}
