//! CSV and JSON serialization of metric reports.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use jdpnet_core::metrics::{MetricReport, SkippedImage};
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const AGGREGATE_LABEL: &str = "AGGREGATE";

/// `image,<metrics...>` header, one row per image, then the aggregate row.
/// Comma separated, LF terminated, shortest round-trip float formatting.
pub fn to_csv(report: &MetricReport) -> String {
    let mut out = String::from("image");
    for m in &report.metrics {
        out.push(',');
        out.push_str(m.name());
    }
    out.push('\n');
    let mut row = |label: &str, values: &[f64]| {
        out.push_str(&csv_field(label));
        for v in values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    for r in &report.rows {
        row(&r.image, &r.values);
    }
    row(AGGREGATE_LABEL, &report.aggregate);
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn metric_object(report: &MetricReport, values: &[f64]) -> Map<String, Value> {
    report
        .metrics
        .iter()
        .zip(values)
        .map(|(m, v)| (m.name().to_string(), json!(v)))
        .collect()
}

pub fn to_json(
    report: &MetricReport,
    skipped: &[SkippedImage],
    config: &impl Serialize,
) -> Result<String> {
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            let mut obj = metric_object(report, &r.values);
            obj.insert("image".into(), json!(r.image));
            Value::Object(obj)
        })
        .collect();
    let doc = json!({
        "metrics": report.metrics,
        "rows": rows,
        "aggregate": metric_object(report, &report.aggregate),
        "skipped": skipped,
        "notes": report.notes,
        "config": config,
    });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn pretty_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}
