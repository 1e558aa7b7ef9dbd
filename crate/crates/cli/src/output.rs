//! Report rendering: pretty JSON on stdout, CSV tables for spreadsheets.

use std::fs;
use std::path::Path;

use atl_core::batch::ScoreRow;
use atl_core::metrics::MetricReport;
use atl_core::orchestrator::{IterationReport, Mode, StatusCounts};
use atl_core::synthetic::benchmark::ComparisonReport;
use atl_core::{Error, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopStatus {
    pub mode: Mode,
    pub iteration: usize,
    pub counts: StatusCounts,
    pub iterations: Vec<IterationReport>,
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types always serialize")
}

const METRIC_HEADER: [&str; 9] = ["mIOU", "BF1", "CGS", "CGS_h", "CGS_v", "alpha_h", "alpha_v", "ne_h", "ne_v"];

fn metric_fields(m: Option<&MetricReport>) -> Vec<String> {
    match m {
        Some(m) => [m.miou, m.bf1, m.cgs, m.cgs_h, m.cgs_v, m.alpha_h, m.alpha_v, m.ne_h, m.ne_v]
            .iter()
            .map(f64::to_string)
            .collect(),
        None => vec![String::new(); METRIC_HEADER.len()],
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_score_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let header: Vec<&str> = std::iter::once("image").chain(METRIC_HEADER).collect();
    write_table(
        path,
        &header,
        rows.iter().map(|r| {
            let mut fields = vec![r.image_id.clone()];
            fields.extend(metric_fields(Some(&r.metrics)));
            fields
        }),
    )
}

/// `summary.csv` (successful labels per method) and `iterations.csv` (the
/// per-iteration validation curves).
pub fn write_comparison_csv(dir: &Path, report: &ComparisonReport) -> Result<()> {
    let mut header = vec!["method", "successful", "unlabeledPool", "fraction", "iterations", "stopReason"];
    header.extend(METRIC_HEADER);
    write_table(
        &dir.join("summary.csv"),
        &header,
        report.summaries.iter().map(|s| {
            let stop = serde_json::to_value(s.stop_reason).expect("enum serializes");
            let mut fields = vec![
                s.method.clone(),
                s.successful.to_string(),
                s.unlabeled_pool.to_string(),
                s.fraction.to_string(),
                s.iterations.to_string(),
                stop.as_str().unwrap_or_default().to_string(),
            ];
            fields.extend(metric_fields(s.quality.as_ref()));
            fields
        }),
    )?;

    let mut header = vec!["method", "iteration", "trainingSetSize", "acceptedNew", "remaining"];
    header.extend(METRIC_HEADER);
    write_table(
        &dir.join("iterations.csv"),
        &header,
        report.iterations.iter().map(|r| {
            let mut fields = vec![
                r.method.clone(),
                r.iteration.to_string(),
                r.training_set_size.to_string(),
                r.accepted_new.to_string(),
                r.remaining.to_string(),
            ];
            fields.extend(metric_fields(r.validation.as_ref()));
            fields
        }),
    )
}
