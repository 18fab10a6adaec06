//! Metrics CSV files and the grouped bar chart built from them.

use std::fmt::Write as _;
use std::io::{Read, Write};

use gcn_llm::train::Evaluation;

pub const METRICS_HEADER: [&str; 11] = [
    "dataset",
    "n",
    "accuracy",
    "precision",
    "recall",
    "f1",
    "auc_roc",
    "tp",
    "fp",
    "tn",
    "fn",
];

/// Metrics plotted as bars, in legend order.
const PLOTTED: [&str; 5] = ["accuracy", "precision", "recall", "f1", "auc_roc"];
const COLORS: [&str; 5] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2"];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{source_name}: header must be {expected}")]
    Header {
        source_name: String,
        expected: String,
    },
    #[error("{source_name}: row {row}: bad value {value:?} in column {column}")]
    Value {
        source_name: String,
        row: usize,
        column: String,
        value: String,
    },
}

/// One row of a metrics file, kept as text for merging plus parsed values
/// for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub fields: Vec<String>,
}

impl MetricsRow {
    pub fn from_evaluation(dataset: &str, ev: &Evaluation) -> Self {
        let s = &ev.bundle.scores;
        let c = &ev.bundle.confusion;
        let fields = vec![
            dataset.to_string(),
            c.total().to_string(),
            s.accuracy.to_string(),
            s.precision.to_string(),
            s.recall.to_string(),
            s.f1.to_string(),
            ev.bundle.auc_roc.map(|a| a.to_string()).unwrap_or_default(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
        ];
        MetricsRow { fields }
    }

    pub fn dataset(&self) -> &str {
        &self.fields[0]
    }

    /// Plotted metric value; `None` when the field is empty.
    pub fn metric(&self, name: &str) -> Option<f64> {
        let i = METRICS_HEADER.iter().position(|h| *h == name)?;
        self.fields[i].parse().ok()
    }
}

pub fn write_metrics<W: Write>(w: W, rows: &[MetricsRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(&r.fields)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R, source_name: &str) -> Result<Vec<MetricsRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(r);
    if rdr.headers()?.iter().ne(METRICS_HEADER) {
        return Err(ReportError::Header {
            source_name: source_name.to_string(),
            expected: METRICS_HEADER.join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        for (col, value) in METRICS_HEADER.iter().zip(&fields).skip(1) {
            let ok = match *col {
                "auc_roc" => value.is_empty() || value.parse::<f64>().is_ok(),
                "n" | "tp" | "fp" | "tn" | "fn" => value.parse::<usize>().is_ok(),
                _ => value.parse::<f64>().is_ok(),
            };
            if !ok {
                return Err(ReportError::Value {
                    source_name: source_name.to_string(),
                    row: i + 1,
                    column: col.to_string(),
                    value: value.clone(),
                });
            }
        }
        rows.push(MetricsRow { fields });
    }
    Ok(rows)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bar chart: one group per dataset, one bar per metric, y in [0, 1].
pub fn render_svg(rows: &[MetricsRow]) -> String {
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 60.0);
    let bar_w = 14.0;
    let group_gap = 30.0;
    let group_w = bar_w * PLOTTED.len() as f64;
    let plot_w = (group_w + group_gap) * rows.len().max(1) as f64 + group_gap;
    let plot_h = 300.0;
    let width = left + plot_w + right;
    let height = top + plot_h + bottom;
    let y_of = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">
<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>
<text x="{}" y="22" font-size="14" text-anchor="middle">Classification metrics by dataset</text>"#,
        width / 2.0
    );
    for tick in 0..=5 {
        let v = tick as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>
<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>
<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + plot_h,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    for (g, row) in rows.iter().enumerate() {
        let x0 = left + group_gap + g as f64 * (group_w + group_gap);
        for (m, (name, color)) in PLOTTED.iter().zip(COLORS).enumerate() {
            let Some(v) = row.metric(name) else { continue };
            let y = y_of(v);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{bar_w}" height="{}" fill="{color}"><title>{}: {name} = {v:.4}</title></rect>"#,
                x0 + m as f64 * bar_w,
                top + plot_h - y,
                escape(row.dataset())
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + group_w / 2.0,
            top + plot_h + 18.0,
            escape(row.dataset())
        );
    }
    for (m, (name, color)) in PLOTTED.iter().zip(COLORS).enumerate() {
        let y = top + 10.0 + m as f64 * 18.0;
        let x = left + plot_w + 20.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{color}"/>
<text x="{}" y="{}">{name}</text>"#,
            y - 10.0,
            x + 18.0,
            y
        );
    }
    svg.push_str("</svg>\n");
    svg
}
