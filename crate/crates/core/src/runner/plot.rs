//! Hand-written SVG line and bar charts.
//!
//! Every plotted point or bar carries `data-series`, `data-x` and `data-y`
//! attributes holding the exact values, so charts can be read back.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::parse_baseline_csv;
use crate::eval::{AccuracyMatrix, Metrics};
use crate::{Error, Result};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Maps data coordinates onto the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 { self.x1 - self.x0 } else { 1.0 };
        let t = if self.x1 > self.x0 { (x - self.x0) / span } else { 0.5 };
        LEFT + t * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        TOP + (self.y1 - y) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn y_range<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((0.0f64, 1.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (lo, hi)
}

fn header(s: &mut String, title: &str) {
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        escape(title)
    )
    .unwrap();
}

fn y_axis(s: &mut String, f: &Frame) {
    let n = 5;
    for k in 0..=n {
        let v = f.y0 + (f.y1 - f.y0) * k as f64 / n as f64;
        let y = f.py(v);
        writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            W - RIGHT
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
    }
    if f.y0 < 0.0 {
        let y = f.py(0.0);
        writeln!(s, r#"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#, W - RIGHT).unwrap();
    }
    writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#,
        H - BOTTOM
    )
    .unwrap();
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 14.0;
        writeln!(
            s,
            r#"<rect x="{x}" y="{:.2}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            PALETTE[i % PALETTE.len()]
        )
        .unwrap();
        writeln!(s, r#"<text x="{}" y="{y:.2}">{}</text>"#, x + 16.0, escape(name)).unwrap();
    }
}

/// Line chart with integer x ticks. Each series is a polyline with one
/// circle per point.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (x0, x1) = if x0.is_finite() { (x0, x1) } else { (0.0, 1.0) };
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let (y0, y1) = y_range(ys.iter());
    let f = Frame { x0, x1, y0, y1 };
    let mut s = String::new();
    header(&mut s, title);
    y_axis(&mut s, &f);
    let base = H - BOTTOM;
    writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#, W - RIGHT).unwrap();
    let mut tick = x0.ceil();
    while tick <= x1 {
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{tick}</text>"#,
            f.px(tick),
            base + 18.0
        )
        .unwrap();
        tick += 1.0;
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 10.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let name = escape(&ser.name);
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        writeln!(
            s,
            r#"<polyline data-series="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .unwrap();
        for &(x, y) in &ser.points {
            writeln!(
                s,
                r#"<circle data-series="{name}" data-x="{x}" data-y="{y}" cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                f.px(x),
                f.py(y)
            )
            .unwrap();
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart. Each group is a label and its named bars; bar names
/// share colors across groups.
pub fn bar_chart_svg(title: &str, groups: &[(String, Vec<(String, f64)>)]) -> String {
    let mut names: Vec<&str> = Vec::new();
    for (_, bars) in groups {
        for (n, _) in bars {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let (y0, y1) = y_range(groups.iter().flat_map(|(_, b)| b.iter().map(|(_, v)| v)));
    let f = Frame { x0: 0.0, x1: 1.0, y0, y1 };
    let mut s = String::new();
    header(&mut s, title);
    y_axis(&mut s, &f);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bar_w = slot * 0.8 / names.len().max(1) as f64;
    let zero = f.py(0.0);
    for (g, (label, bars)) in groups.iter().enumerate() {
        let gx = LEFT + slot * g as f64 + slot * 0.1;
        for (name, v) in bars {
            let k = names.iter().position(|n| n == name).unwrap_or(0);
            let x = gx + bar_w * k as f64;
            let top = f.py(*v).min(zero);
            let height = (f.py(*v) - zero).abs();
            writeln!(
                s,
                r#"<rect data-series="{}" data-x="{}" data-y="{v}" x="{x:.2}" y="{top:.2}" width="{:.2}" height="{height:.2}" fill="{}"/>"#,
                escape(name),
                escape(label),
                bar_w * 0.9,
                PALETTE[k % PALETTE.len()]
            )
            .unwrap();
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            gx + slot * 0.4,
            H - BOTTOM + 18.0,
            escape(label)
        )
        .unwrap();
    }
    legend(&mut s, &names);
    s.push_str("</svg>\n");
    s
}

/// Mean accuracy over tasks seen so far, per step.
pub fn average_series(a: &AccuracyMatrix) -> Series {
    Series {
        name: "average".into(),
        points: a
            .rows()
            .iter()
            .enumerate()
            .map(|(i, row)| ((i + 1) as f64, row[..=i].iter().sum::<f64>() / (i + 1) as f64))
            .collect(),
    }
}

/// One series per task, from the step it was trained onwards.
pub fn per_task_series(a: &AccuracyMatrix) -> Vec<Series> {
    (1..=a.n_tasks())
        .map(|j| Series {
            name: format!("task_{j}"),
            points: (j..=a.rows().len()).map(|i| (i as f64, a.get(i, j))).collect(),
        })
        .collect()
}

/// Writes `plots/average_accuracy.svg`, `plots/task_accuracy.svg` and, once
/// the matrix is complete, `plots/metrics.svg` into a run directory.
pub fn emit_plots(run_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = run_dir.as_ref();
    let matrix_path = dir.join("matrix.csv");
    if !matrix_path.is_file() {
        return Err(Error::InvalidArgument(format!("no matrix.csv in {}", dir.display())));
    }
    let a = AccuracyMatrix::read_csv(&matrix_path)?;
    if a.rows().is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no rows", matrix_path.display())));
    }
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    let mut put = |name: &str, svg: String| -> Result<()> {
        let p = plots.join(name);
        fs::write(&p, svg)?;
        written.push(p);
        Ok(())
    };
    put(
        "average_accuracy.svg",
        line_chart_svg("Average accuracy over seen tasks", "after task", "accuracy", &[average_series(&a)]),
    )?;
    put(
        "task_accuracy.svg",
        line_chart_svg("Accuracy per task", "after task", "accuracy", &per_task_series(&a)),
    )?;
    if a.is_complete() {
        let baseline_path = dir.join("baseline.csv");
        let baseline = if baseline_path.is_file() {
            Some(parse_baseline_csv(&fs::read_to_string(baseline_path)?)?)
        } else {
            None
        };
        let m = Metrics::compute(&a, baseline.as_deref())?;
        let mut bars = vec![("fa".to_string(), m.fa), ("ca".to_string(), m.ca)];
        bars.extend(m.forgetting.map(|v| ("forgetting".to_string(), v)));
        bars.extend(m.forward_transfer.map(|v| ("forward_transfer".to_string(), v)));
        put("metrics.svg", bar_chart_svg("Aggregate metrics", &[("run".to_string(), bars)]))?;
    }
    Ok(written)
}
