//! Desk-scale benchmark: one synthetic pool, the three self-training modes,
//! and the successful-label accounting used to compare them.
//!
//! Layout of a benchmark directory:
//!
//! ```text
//! benchmark.json           the BenchmarkConfig it was built with
//! truth/ images/           pool ground truth and the matching "inputs"
//! seed_labels/             manual labels of the seed set
//! validation/{images,truth}/
//! workspace/<mode>/        loop state per mode
//! reports/comparison.json
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{y_shaped_tree_filter, FilterConfig};
use crate::ga::GaConfig;
use crate::mask::Mask;
use crate::metrics::{mean_report, score, MetricReport};
use crate::orchestrator::manifest::{read_json, write_json_atomic};
use crate::orchestrator::predictor::resolve;
use crate::orchestrator::{
    run_loop, DatasetManifest, LoopConfig, LoopReport, Mode, Predictor, ProcessConfig, Status,
    StopReason, ValidationSet,
};
use crate::repair::RepairConfig;
use crate::seeds::derive_seed;

use super::mock::{MockPredictor, QualityCurve};
use super::{generate_ground_truth, DegradationConfig};

pub const CONFIG_FILE: &str = "benchmark.json";

/// Filter thresholds rescaled from the 256-px defaults to 96-px masks.
pub fn filter_preset_96() -> FilterConfig {
    FilterConfig {
        min_blob_area: 8,
        trunk_scan_rows: 15,
        other_tree_tol: 38,
        false_branch_y_min: 90.0,
        false_branch_min_height: 2,
        false_trunk_x_tol: 11,
        false_trunk_min_height: 30,
        false_trunk_max_width: 6,
        y_filter_top_rows: 8,
        y_filter_bottom_rows: 15,
        y_filter_top_sections: 2,
        y_filter_bottom_sections: 1,
    }
}

/// Smaller GA budget so a full three-mode comparison stays within minutes.
pub fn ga_profile_benchmark() -> GaConfig {
    GaConfig {
        population_size: 400,
        generations: 200,
        ..GaConfig::default()
    }
}

pub fn repair_preset_96() -> RepairConfig {
    RepairConfig {
        association_window: 4.0,
        ..RepairConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Mask side length in pixels.
    pub size: usize,
    /// Images in the pool, seeds included.
    pub pool: usize,
    /// Leading pool images given manual labels.
    pub seeds: usize,
    pub validation: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub rng_seed: u64,
    pub thickness: (usize, usize),
    pub degradation: DegradationConfig,
    pub quality: QualityCurve,
    pub filter: FilterConfig,
    pub ga: GaConfig,
    pub repair: RepairConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            size: 96,
            pool: 120,
            seeds: 12,
            validation: 24,
            batch_size: 12,
            max_iterations: 30,
            rng_seed: 0,
            thickness: (3, 6),
            degradation: DegradationConfig::default(),
            quality: QualityCurve::default(),
            filter: filter_preset_96(),
            ga: ga_profile_benchmark(),
            repair: repair_preset_96(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 || self.seeds >= self.pool {
            return Err(Error::Config("benchmark needs 1 <= seeds < pool".into()));
        }
        if self.batch_size == 0 || self.max_iterations == 0 {
            return Err(Error::Config("benchmark batch_size and max_iterations must be >= 1".into()));
        }
        self.degradation.validate()?;
        self.quality.validate()?;
        self.filter.validate_for_height(self.size)?;
        self.ga.validate()?;
        self.repair.validate()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(CONFIG_FILE))
    }

    pub fn mock_predictor(&self) -> MockPredictor {
        MockPredictor {
            degradation: self.degradation.clone(),
            quality: self.quality.clone(),
            seed: derive_seed(self.rng_seed, "mock", 0),
        }
    }

    pub fn process_config(&self) -> ProcessConfig {
        ProcessConfig {
            filter: self.filter.clone(),
            ga: self.ga.clone(),
            repair: self.repair.clone(),
            external_dir: None,
        }
    }

    pub fn loop_config(&self, mode: Mode) -> LoopConfig {
        LoopConfig {
            mode,
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            stop_when_no_progress: true,
            repredict_all_accepted: false,
            predictor_command: Vec::new(),
            rng_seed: self.rng_seed,
            images_dir: "images".into(),
            seed_labels_dir: "seed_labels".into(),
            state_dir: state_dir(mode),
            truth_dir: Some("truth".into()),
            validation: Some(ValidationSet {
                images_dir: "validation/images".into(),
                truth_dir: "validation/truth".into(),
            }),
        }
    }
}

pub fn state_dir(mode: Mode) -> String {
    format!("workspace/{}", mode.name().to_ascii_lowercase())
}

pub fn pool_id(i: usize) -> String {
    format!("img_{i:03}")
}

pub fn validation_id(i: usize) -> String {
    format!("val_{i:03}")
}

/// Writes a fresh benchmark directory.
pub fn init_benchmark(dir: &Path, cfg: &BenchmarkConfig) -> Result<()> {
    cfg.validate()?;
    if dir.join(CONFIG_FILE).exists() {
        return Err(Error::Config(format!(
            "{} already holds a benchmark",
            dir.display()
        )));
    }
    let pool = generate_ground_truth(
        cfg.pool,
        derive_seed(cfg.rng_seed, "pool", 0),
        cfg.size,
        cfg.thickness,
        &cfg.filter,
    )?;
    let validation = generate_ground_truth(
        cfg.validation.max(1),
        derive_seed(cfg.rng_seed, "validation", 0),
        cfg.size,
        cfg.thickness,
        &cfg.filter,
    )?;
    pool.par_iter().enumerate().try_for_each(|(i, g)| {
        let name = format!("{}.png", pool_id(i));
        g.mask.save_png(dir.join("truth").join(&name))?;
        g.mask.save_png(dir.join("images").join(&name))?;
        if i < cfg.seeds {
            g.mask.save_png(dir.join("seed_labels").join(&name))?;
        }
        Ok::<_, Error>(())
    })?;
    validation
        .par_iter()
        .take(cfg.validation)
        .enumerate()
        .try_for_each(|(i, g)| {
            let name = format!("{}.png", validation_id(i));
            g.mask.save_png(dir.join("validation/truth").join(&name))?;
            g.mask.save_png(dir.join("validation/images").join(&name))
        })?;
    write_json_atomic(&dir.join(CONFIG_FILE), cfg)
}

/// Runs (or resumes) one mode on a benchmark directory.
pub fn run_mode(dir: &Path, cfg: &BenchmarkConfig, mode: Mode, predictor: &dyn Predictor) -> Result<LoopReport> {
    run_loop(dir, &cfg.loop_config(mode), &cfg.process_config(), predictor)
}

/// Successful-label accounting for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeSummary {
    pub method: String,
    /// Final labels that pass the Y-shaped tree filter.
    pub successful: usize,
    /// Images that started without a label.
    pub unlabeled_pool: usize,
    pub fraction: f64,
    /// Successful labels (after the filter) against ground truth.
    pub quality: Option<MetricReport>,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

/// One point of the per-iteration validation curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationRow {
    pub method: String,
    pub iteration: usize,
    pub training_set_size: usize,
    pub accepted_new: usize,
    pub remaining: usize,
    pub validation: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub rng_seed: u64,
    pub summaries: Vec<ModeSummary>,
    pub iterations: Vec<IterationRow>,
}

impl ComparisonReport {
    pub fn summary(&self, method: &str) -> Option<&ModeSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Method name used in summaries; CST also gets a filtered variant.
pub const CST_FILTERED: &str = "CST w/ Filter";

fn summarize(dir: &Path, cfg: &BenchmarkConfig, report: &LoopReport) -> Result<Vec<ModeSummary>> {
    let lc = cfg.loop_config(report.mode);
    let manifest = DatasetManifest::load(&lc.manifest_path(dir))?;
    let labeled: Vec<(String, String)> = manifest
        .entries
        .iter()
        .filter(|e| e.status == Status::PseudoLabeled)
        .filter_map(|e| e.label_path.clone().map(|l| (e.image_id.clone(), l)))
        .collect();
    let scored = labeled
        .par_iter()
        .map(|(id, label)| {
            let label = Mask::load_png(resolve(dir, label))?;
            let truth = Mask::load_png(dir.join("truth").join(format!("{id}.png")))?;
            let y = y_shaped_tree_filter(&label, &cfg.filter);
            let filtered = if y.passes { Some(score(&y.mask, &truth)?) } else { None };
            Ok((score(&label, &truth)?, filtered))
        })
        .collect::<Result<Vec<_>>>()?;

    let unlabeled_pool = cfg.pool - cfg.seeds;
    let successful: Vec<MetricReport> = scored.iter().filter_map(|(_, f)| *f).collect();
    let row = |method: &str, n: usize, quality: Option<MetricReport>| ModeSummary {
        method: method.to_string(),
        successful: n,
        unlabeled_pool,
        fraction: n as f64 / unlabeled_pool as f64,
        quality,
        iterations: report.iterations.len(),
        stop_reason: report.stop_reason,
    };
    Ok(match report.mode {
        Mode::Cst => {
            // raw CST labels count as labels, not as successful ones
            let all: Vec<MetricReport> = scored.iter().map(|(s, _)| *s).collect();
            vec![
                row(Mode::Cst.name(), all.len(), mean_report(&all)),
                row(CST_FILTERED, successful.len(), mean_report(&successful)),
            ]
        }
        m => vec![row(m.name(), successful.len(), mean_report(&successful))],
    })
}

fn iteration_rows(report: &LoopReport, seeds: usize, pool: usize) -> Vec<IterationRow> {
    let method = report.mode.name().to_string();
    let mut rows = vec![IterationRow {
        method: method.clone(),
        iteration: 0,
        training_set_size: seeds,
        accepted_new: 0,
        remaining: pool - seeds,
        validation: report.baseline_validation,
    }];
    rows.extend(report.iterations.iter().map(|r| IterationRow {
        method: method.clone(),
        iteration: r.iteration,
        training_set_size: r.training_set_size,
        accepted_new: r.accepted_new,
        remaining: r.counts.remaining(),
        validation: r.validation,
    }));
    rows
}

/// Runs every requested mode on the same pool and writes
/// `reports/comparison.json`.
pub fn compare(dir: &Path, modes: &[Mode], predictor: &dyn Predictor) -> Result<ComparisonReport> {
    let cfg = BenchmarkConfig::load(dir)?;
    cfg.validate()?;
    let mut summaries = Vec::new();
    let mut iterations = Vec::new();
    for &mode in modes {
        if mode == Mode::External {
            return Err(Error::Config("the benchmark compares CST, FBST and ATL only".into()));
        }
        let report = run_mode(dir, &cfg, mode, predictor)?;
        summaries.extend(summarize(dir, &cfg, &report)?);
        iterations.extend(iteration_rows(&report, cfg.seeds, cfg.pool));
    }
    let report = ComparisonReport {
        rng_seed: cfg.rng_seed,
        summaries,
        iterations,
    };
    fs::create_dir_all(dir.join("reports")).map_err(|e| Error::io(dir.join("reports"), e))?;
    write_json_atomic(&dir.join("reports/comparison.json"), &report)?;
    Ok(report)
}
