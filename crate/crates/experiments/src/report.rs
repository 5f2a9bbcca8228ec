//! CSV and SVG artifacts.

use std::fmt::Write as _;

use nll_core::trainers::EpochRecord;

use crate::error::{config_err, Result};

pub const CSV_HEADER: &str =
    "epoch,trainer,repeat,test_acc_net1,test_acc_net2,label_precision,keep_rate,lr,mean_joint_loss";

fn num(v: f64) -> String {
    format!("{v:.9}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Renders per-epoch records of one trainer run. Missing values (second
/// network of a single-network trainer, precision of a trainer that never
/// selected, loss of an epoch without updates) are empty fields.
pub fn records_csv(trainer: &str, repeat: usize, records: &[EpochRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            trainer,
            repeat,
            opt(r.test_accuracy.first().copied()),
            opt(r.test_accuracy.get(1).copied()),
            opt(r.label_precision),
            num(r.keep_rate),
            num(r.learning_rate),
            opt(r.mean_joint_loss),
        );
    }
    out
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub epoch: usize,
    pub trainer: String,
    pub repeat: usize,
    pub test_acc_net1: Option<f64>,
    pub test_acc_net2: Option<f64>,
    pub label_precision: Option<f64>,
    pub keep_rate: f64,
    pub lr: f64,
    pub mean_joint_loss: Option<f64>,
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(config_err("csv header mismatch"));
    }
    let bad = |line: usize, what: &str| config_err(format!("csv line {line}: {what}"));
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(bad(lineno, "expected 9 fields"));
        }
        let float = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(lineno, "bad number"))
            }
        };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(lineno, "bad integer")) };
        rows.push(CsvRow {
            epoch: int(f[0])?,
            trainer: f[1].to_string(),
            repeat: int(f[2])?,
            test_acc_net1: float(f[3])?,
            test_acc_net2: float(f[4])?,
            label_precision: float(f[5])?,
            keep_rate: float(f[6])?.ok_or_else(|| bad(lineno, "missing keep_rate"))?,
            lr: float(f[7])?.ok_or_else(|| bad(lineno, "missing lr"))?,
            mean_joint_loss: float(f[8])?,
        });
    }
    Ok(rows)
}

/// Per-epoch mean and spread of one trainer across repeats.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSeries {
    pub name: String,
    /// (epoch, mean, std); epochs without a value are left out.
    pub accuracy: Vec<(usize, f64, f64)>,
    pub precision: Vec<(usize, f64, f64)>,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

const WIDTH: f64 = 760.0;
const PANEL_HEIGHT: f64 = 300.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

struct Panel<'a> {
    id: &'a str,
    title: &'a str,
    y_label: &'a str,
    offset: f64,
}

/// Two stacked panels, test accuracy and label precision against epoch,
/// with one polyline per trainer and a mean ± std band behind it.
pub fn render_svg(series: &[CurveSeries]) -> String {
    let height = 2.0 * PANEL_HEIGHT;
    let max_epoch = series
        .iter()
        .flat_map(|s| s.accuracy.iter().chain(&s.precision).map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let panels = [
        Panel {
            id: "accuracy",
            title: "Test accuracy",
            y_label: "test accuracy (%)",
            offset: 0.0,
        },
        Panel {
            id: "precision",
            title: "Label precision",
            y_label: "label precision (%)",
            offset: PANEL_HEIGHT,
        },
    ];
    for panel in &panels {
        render_panel(&mut out, panel, series, max_epoch);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, panel: &Panel, series: &[CurveSeries], max_epoch: usize) {
    let x0 = LEFT;
    let x1 = WIDTH - RIGHT;
    let y0 = panel.offset + PANEL_HEIGHT - BOTTOM;
    let y1 = panel.offset + TOP;
    let sx = |e: usize| x0 + (x1 - x0) * (e as f64 / max_epoch as f64);
    let sy = |v: f64| y0 - (y0 - y1) * v.clamp(0.0, 1.0);

    let _ = writeln!(out, r#"<g id="{}">"#, panel.id);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">{}</text>"#,
        (x0 + x1) / 2.0,
        y1 - 10.0,
        panel.title
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#e0e0e0"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            y + 4.0,
            tick * 20
        );
    }
    let step = (max_epoch / 10).max(1);
    let mut e = 0;
    while e <= max_epoch {
        let x = sx(e);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{e}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
        e += step;
    }
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.1}" y1="{y0:.1}" x2="{x1:.1}" y2="{y0:.1}" stroke="black"/><line x1="{x0:.1}" y1="{y0:.1}" x2="{x0:.1}" y2="{y1:.1}" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
        (x0 + x1) / 2.0,
        y0 + 38.0
    );
    let _ = writeln!(
        out,
        r#"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{}</text>"#,
        x0 - 45.0,
        (y0 + y1) / 2.0,
        x0 - 45.0,
        (y0 + y1) / 2.0,
        panel.y_label
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points = if panel.id == "accuracy" {
            &s.accuracy
        } else {
            &s.precision
        };
        if points.iter().any(|p| p.2 > 0.0) {
            let mut band = String::new();
            for &(e, m, sd) in points {
                let _ = write!(band, "{:.2},{:.2} ", sx(e), sy(m + sd));
            }
            for &(e, m, sd) in points.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(e), sy(m - sd));
            }
            let _ = writeln!(
                out,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
        }
        let line: Vec<String> = points
            .iter()
            .map(|&(e, m, _)| format!("{:.2},{:.2}", sx(e), sy(m)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" data-trainer="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            s.name,
            line.join(" ")
        );
        let ly = y1 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 + 15.0,
            x1 + 35.0,
            x1 + 40.0,
            ly + 4.0,
            s.name
        );
    }
    out.push_str("</g>\n");
}
