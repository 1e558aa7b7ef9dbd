//! Directory-level drivers: every PNG in a directory through one stage,
//! images in parallel, results in id order. A bad image is reported as a
//! failure instead of aborting the batch.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{atl_pre_filter, y_shaped_tree_filter, FilterConfig};
use crate::ga::FitResult;
use crate::mask::Mask;
use crate::metrics::{mean_report, score_with, MetricReport};
use crate::orchestrator::process::{custom_process, ProcessConfig, Verdict};
use crate::orchestrator::Mode;
use crate::repair::RepairReport;
use crate::seeds::derive_seed;

/// `(id, path)` of every `.png` directly inside `dir`, sorted by id.
pub fn list_masks(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".png") {
            out.push((id.to_string(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Failure {
    pub image_id: String,
    pub error: String,
}

fn split<T>(results: Vec<(String, Result<T>)>) -> (Vec<T>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (image_id, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(Failure {
                image_id,
                error: e.to_string(),
            }),
        }
    }
    (ok, failures)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    /// The full pre-filter chain used before fitting.
    Pre,
    /// The Y-shaped tree gate.
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterRow {
    pub image_id: String,
    /// Y-filter verdict; absent for the pre-filter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passes: Option<bool>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FilterSummary {
    pub filter: FilterKind,
    pub images: Vec<FilterRow>,
    pub failures: Vec<Failure>,
}

/// Filters every mask in `input`, writing `<output>/<id>.png`.
pub fn filter_dir(input: &Path, output: &Path, kind: FilterKind, cfg: &FilterConfig) -> Result<FilterSummary> {
    cfg.validate()?;
    let results: Vec<_> = list_masks(input)?
        .into_par_iter()
        .map(|(id, path)| {
            let r = (|| {
                let mask = Mask::load_png(&path)?;
                let row = match kind {
                    FilterKind::Pre => {
                        let out = atl_pre_filter(&mask, cfg);
                        out.mask.save_png(output.join(format!("{id}.png")))?;
                        FilterRow {
                            image_id: id.clone(),
                            passes: None,
                            warnings: out.warnings.iter().map(|w| w.to_string()).collect(),
                        }
                    }
                    FilterKind::Y => {
                        let out = y_shaped_tree_filter(&mask, cfg);
                        out.mask.save_png(output.join(format!("{id}.png")))?;
                        FilterRow {
                            image_id: id.clone(),
                            passes: Some(out.passes),
                            warnings: Vec::new(),
                        }
                    }
                };
                Ok(row)
            })();
            (id, r)
        })
        .collect();
    let (images, failures) = split(results);
    Ok(FilterSummary {
        filter: kind,
        images,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessRow {
    pub image_id: String,
    pub accepted: bool,
    pub reasons: Vec<String>,
    pub fit: Option<FitResult>,
    pub repair: Option<RepairReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub accepted_fraction: f64,
    pub images: Vec<ProcessRow>,
    pub failures: Vec<Failure>,
}

/// Runs the full ATL chain on every prediction in `input`. Repaired labels go
/// to `accepted_dir`, the untouched predictions of rejected images to
/// `rejected_dir`. Image `id` fits with GA seed `derive_seed(seed, id, 0)`.
pub fn atl_process_dir(
    input: &Path,
    accepted_dir: &Path,
    rejected_dir: &Path,
    cfg: &ProcessConfig,
    seed: u64,
) -> Result<ProcessSummary> {
    cfg.validate()?;
    let results: Vec<_> = list_masks(input)?
        .into_par_iter()
        .map(|(id, path)| {
            let r = (|| {
                let pred = Mask::load_png(&path)?;
                let res = custom_process(Mode::Atl, &id, &pred, cfg, derive_seed(seed, &id, 0))?;
                let (accepted, reasons) = match res.verdict {
                    Verdict::Accepted(mask) => {
                        mask.save_png(accepted_dir.join(format!("{id}.png")))?;
                        (true, Vec::new())
                    }
                    Verdict::Rejected(reasons) => {
                        pred.save_png(rejected_dir.join(format!("{id}.png")))?;
                        (false, reasons)
                    }
                };
                Ok(ProcessRow {
                    image_id: id.clone(),
                    accepted,
                    reasons,
                    fit: res.fit,
                    repair: res.repair,
                })
            })();
            (id, r)
        })
        .collect();
    let (images, failures) = split(results);
    let accepted = images.iter().filter(|r| r.accepted).count();
    let total = images.len() + failures.len();
    Ok(ProcessSummary {
        accepted,
        rejected: images.len() - accepted,
        accepted_fraction: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
        images,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreRow {
    pub image_id: String,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: Option<MetricReport>,
    pub failures: Vec<Failure>,
}

/// Scores each truth mask against the prediction of the same name. A truth
/// without a prediction is a failure.
pub fn score_dirs(pred_dir: &Path, truth_dir: &Path, bf1_tolerance: f64) -> Result<(Vec<ScoreRow>, ScoreSummary)> {
    if !(bf1_tolerance >= 0.0 && bf1_tolerance.is_finite()) {
        return Err(Error::Config("metrics.bf1_tolerance must be a non-negative number".into()));
    }
    list_masks(pred_dir)?;
    let results: Vec<_> = list_masks(truth_dir)?
        .into_par_iter()
        .map(|(id, truth_path)| {
            let r = (|| {
                let pred_path = pred_dir.join(format!("{id}.png"));
                if !pred_path.is_file() {
                    return Err(Error::Data(format!("no prediction at {}", pred_path.display())));
                }
                let metrics = score_with(&Mask::load_png(&pred_path)?, &Mask::load_png(&truth_path)?, bf1_tolerance)?;
                Ok(ScoreRow {
                    image_id: id.clone(),
                    metrics,
                })
            })();
            (id, r)
        })
        .collect();
    let (rows, failures) = split(results);
    let all: Vec<MetricReport> = rows.iter().map(|r| r.metrics).collect();
    let summary = ScoreSummary {
        count: rows.len(),
        mean: mean_report(&all),
        failures,
    };
    Ok((rows, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_reports_missing_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let (p, t) = (dir.path().join("p"), dir.path().join("t"));
        let m = Mask::from_ascii("..##\n.##.\n");
        for id in ["a", "b"] {
            m.save_png(t.join(format!("{id}.png"))).unwrap();
        }
        m.save_png(p.join("a.png")).unwrap();
        let (rows, summary) = score_dirs(&p, &t, 2.0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].metrics.cgs, 1.0);
        assert_eq!(summary.failures.len(), 1);
        assert_eq!(summary.failures[0].image_id, "b");
        assert!(score_dirs(&p, &t, -1.0).is_err());
        assert!(score_dirs(&dir.path().join("nope"), &t, 2.0).is_err());
    }

    #[test]
    fn y_filter_dir_flags_each_image() {
        let dir = tempfile::tempdir().unwrap();
        let (i, o) = (dir.path().join("in"), dir.path().join("out"));
        Mask::new(16, 16).save_png(i.join("empty.png")).unwrap();
        fs::write(i.join("junk.png"), b"not a png").unwrap();
        let s = filter_dir(&i, &o, FilterKind::Y, &FilterConfig::default()).unwrap();
        assert_eq!(s.images.len(), 1);
        assert_eq!(s.images[0].passes, Some(false));
        assert_eq!(s.failures[0].image_id, "junk");
        assert!(o.join("empty.png").is_file());
    }
}
