//! The iterative training loop: draw a batch of unlabeled images, predict
//! them with the previous model, run the custom process, retrain on the seed
//! labels plus every accepted pseudo-label, repeat.
//!
//! State lives under `<root>/<state_dir>`:
//!
//! ```text
//! manifest.json              dataset bookkeeping, replaced atomically
//! loop.lock                  present while a loop owns the directory
//! models/iter_<i>/           model trained after iteration i (0 = seeds only)
//! train/iter_<i>.json        training manifest for that model
//! inputs/iter_<i>.txt        images predicted in iteration i
//! predictions/iter_<i>/      raw predictions
//! labels/iter_<i>/           pseudo-labels accepted in iteration i
//! fits/iter_<i>/             ATL fit and repair records
//! validation/iter_<i>/       validation-set predictions of model i
//! reports/                   per-iteration and whole-loop JSON reports
//! ```

pub mod manifest;
pub mod predictor;
pub mod process;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::metrics::{mean_report, score, MetricReport};
use crate::seeds::derive_seed;

pub use manifest::{DatasetManifest, ManifestEntry, Mode, Status, StatusCounts, TrainEntry, WorkspaceLock};
pub use predictor::{Predictor, SubprocessPredictor};
pub use process::{custom_process, ProcessConfig, ProcessResult, Verdict};

use manifest::{read_json, write_json_atomic};
use predictor::{check_outputs, output_path, resolve, stem, write_input_list, write_train_manifest};

/// Held-out images scored after every retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSet {
    pub images_dir: String,
    pub truth_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub mode: Mode,
    /// Images drawn per iteration (FBST always draws the whole pool).
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Stop after an iteration that accepts no new image.
    pub stop_when_no_progress: bool,
    /// Re-predict every accepted image each iteration instead of only the
    /// previous iteration's acceptances.
    pub repredict_all_accepted: bool,
    /// Predictor program and leading arguments.
    pub predictor_command: Vec<String>,
    /// Seeds the batch draw order and the per-image fit seeds.
    pub rng_seed: u64,
    /// Paths below are relative to the workspace root.
    pub images_dir: String,
    /// Every `<id>.png` here makes image `<id>` part of the seed set.
    pub seed_labels_dir: String,
    pub state_dir: String,
    /// Ground truth for scoring accepted pseudo-labels, when known.
    pub truth_dir: Option<String>,
    pub validation: Option<ValidationSet>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Atl,
            batch_size: 50,
            max_iterations: 30,
            stop_when_no_progress: true,
            repredict_all_accepted: false,
            predictor_command: Vec::new(),
            rng_seed: 0,
            images_dir: "images".into(),
            seed_labels_dir: "seed_labels".into(),
            state_dir: "run".into(),
            truth_dir: None,
            validation: None,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("loop.batch_size must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("loop.max_iterations must be at least 1".into()));
        }
        for (name, p) in [
            ("images_dir", &self.images_dir),
            ("seed_labels_dir", &self.seed_labels_dir),
            ("state_dir", &self.state_dir),
        ] {
            if p.is_empty() || Path::new(p).is_absolute() {
                return Err(Error::Config(format!(
                    "loop.{name} must be a non-empty path relative to the workspace root"
                )));
            }
        }
        Ok(())
    }

    fn state(&self, rel: impl AsRef<str>) -> String {
        format!("{}/{}", self.state_dir, rel.as_ref())
    }

    pub fn manifest_path(&self, root: &Path) -> std::path::PathBuf {
        resolve(root, &self.state("manifest.json"))
    }

    fn model_dir(&self, i: usize) -> String {
        self.state(format!("models/iter_{i}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    PoolExhausted,
    MaxIterations,
    NoProgress,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationReport {
    pub iteration: usize,
    pub drawn: usize,
    pub repredicted: usize,
    pub accepted_new: usize,
    pub reaccepted: usize,
    pub rejected: usize,
    pub rejection_reasons: BTreeMap<String, usize>,
    pub training_set_size: usize,
    pub counts: StatusCounts,
    /// Model `iteration` on the validation set.
    pub validation: Option<MetricReport>,
    /// Labels accepted this iteration against ground truth.
    pub accepted_quality: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LoopReport {
    pub mode: Mode,
    pub baseline_validation: Option<MetricReport>,
    pub iterations: Vec<IterationReport>,
    pub stop_reason: StopReason,
    pub counts: StatusCounts,
}

/// PNG files in a workspace-relative directory as sorted `(id, path)` pairs.
pub fn list_pngs(root: &Path, dir: &str) -> Result<Vec<(String, String)>> {
    let abs = resolve(root, dir);
    let rd = fs::read_dir(&abs).map_err(|e| Error::io(&abs, e))?;
    let mut out = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(&abs, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix(".png") {
            out.push((id.to_string(), format!("{dir}/{name}")));
        }
    }
    out.sort();
    Ok(out)
}

/// Fresh manifest from the images and seed-label directories.
pub fn init_manifest(root: &Path, cfg: &LoopConfig) -> Result<DatasetManifest> {
    let images = list_pngs(root, &cfg.images_dir)?;
    let seeds = match resolve(root, &cfg.seed_labels_dir).is_dir() {
        true => list_pngs(root, &cfg.seed_labels_dir)?,
        false => Vec::new(),
    };
    if seeds.is_empty() {
        return Err(Error::Config(format!(
            "no seed labels found in {}",
            cfg.seed_labels_dir
        )));
    }
    DatasetManifest::new(cfg.mode, &images, &seeds, cfg.rng_seed)
}

/// Images eligible for drawing, in draw order: never predicted first, then
/// least recently predicted, ties by the seeded shuffle.
pub fn draw_order(manifest: &DatasetManifest) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..manifest.entries.len())
        .filter(|&i| matches!(manifest.entries[i].status, Status::Unlabeled | Status::Rejected))
        .collect();
    idx.sort_by_key(|&i| {
        let e = &manifest.entries[i];
        (e.last_predicted_at_iteration, e.draw_rank)
    });
    idx
}

fn train_model(
    root: &Path,
    cfg: &LoopConfig,
    predictor: &dyn Predictor,
    manifest: &DatasetManifest,
    i: usize,
) -> Result<usize> {
    let set = manifest.training_set();
    let train_rel = cfg.state(format!("train/iter_{i}.json"));
    write_train_manifest(root, &train_rel, &set)?;
    let model = cfg.model_dir(i);
    fs::create_dir_all(resolve(root, &model)).map_err(|e| Error::io(resolve(root, &model), e))?;
    predictor.train(root, &train_rel, &model)?;
    Ok(set.len())
}

fn score_dir(root: &Path, pairs: &[(String, String)]) -> Result<Option<MetricReport>> {
    let reports = pairs
        .par_iter()
        .map(|(pred, truth)| {
            score(
                &Mask::load_png(resolve(root, pred))?,
                &Mask::load_png(resolve(root, truth))?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_report(&reports))
}

/// Predicts the validation set with model `i` and scores it.
pub fn score_validation(
    root: &Path,
    cfg: &LoopConfig,
    predictor: &dyn Predictor,
    i: usize,
) -> Result<Option<MetricReport>> {
    let Some(v) = &cfg.validation else {
        return Ok(None);
    };
    let images: Vec<String> = list_pngs(root, &v.images_dir)?.into_iter().map(|(_, p)| p).collect();
    if images.is_empty() {
        return Ok(None);
    }
    let list = cfg.state(format!("inputs/validation_{i}.txt"));
    let out = cfg.state(format!("validation/iter_{i}"));
    write_input_list(root, &list, &images)?;
    predictor.predict(root, &cfg.model_dir(i), &list, &out)?;
    check_outputs(root, &out, &images)?;
    let pairs: Vec<_> = images
        .iter()
        .map(|p| (output_path(&out, p), format!("{}/{}.png", v.truth_dir, stem(p))))
        .collect();
    score_dir(root, &pairs)
}

/// One predict, process, retrain cycle. The manifest (in memory and on
/// disk) only changes when the whole iteration succeeds.
pub fn run_iteration(
    root: &Path,
    cfg: &LoopConfig,
    process: &ProcessConfig,
    predictor: &dyn Predictor,
    manifest: &mut DatasetManifest,
) -> Result<IterationReport> {
    let i = manifest.iteration + 1;
    let mut next = manifest.clone();

    let order = draw_order(&next);
    let take = match cfg.mode {
        Mode::Fbst => order.len(),
        _ => cfg.batch_size.min(order.len()),
    };
    let drawn: Vec<usize> = order[..take].to_vec();
    for &k in &drawn {
        next.entries[k].status = Status::Pending;
    }
    // CST re-predicts nothing so that it is exactly the plain self-training loop.
    let repredict: Vec<usize> = match cfg.mode {
        Mode::Cst => Vec::new(),
        _ => (0..next.entries.len())
            .filter(|&k| {
                let e = &next.entries[k];
                e.status == Status::PseudoLabeled
                    && (cfg.repredict_all_accepted || e.accepted_at_iteration == Some(i - 1))
            })
            .collect(),
    };
    let mut batch: Vec<usize> = drawn.iter().chain(&repredict).copied().collect();
    batch.sort_unstable();

    let inputs: Vec<String> = batch.iter().map(|&k| next.entries[k].image_path.clone()).collect();
    let list = cfg.state(format!("inputs/iter_{i}.txt"));
    let pred_dir = cfg.state(format!("predictions/iter_{i}"));
    let label_dir = cfg.state(format!("labels/iter_{i}"));
    let fit_dir = cfg.state(format!("fits/iter_{i}"));
    if !inputs.is_empty() {
        write_input_list(root, &list, &inputs)?;
        predictor.predict(root, &cfg.model_dir(i - 1), &list, &pred_dir)?;
        check_outputs(root, &pred_dir, &inputs)?;
    }

    let results: Vec<(usize, ProcessResult)> = batch
        .par_iter()
        .map(|&k| {
            let e = &next.entries[k];
            let pred = Mask::load_png(resolve(root, &output_path(&pred_dir, &e.image_path)))?;
            let seed = derive_seed(cfg.rng_seed, &e.image_id, i as u64);
            Ok((k, custom_process(cfg.mode, &e.image_id, &pred, process, seed)?))
        })
        .collect::<Result<_>>()?;

    let mut report = IterationReport {
        iteration: i,
        drawn: drawn.len(),
        repredicted: repredict.len(),
        accepted_new: 0,
        reaccepted: 0,
        rejected: 0,
        rejection_reasons: BTreeMap::new(),
        training_set_size: 0,
        counts: StatusCounts::default(),
        validation: None,
        accepted_quality: None,
    };
    let mut quality_pairs = Vec::new();
    for (k, result) in results {
        let entry = &mut next.entries[k];
        entry.last_predicted_at_iteration = Some(i);
        if result.fit.is_some() || result.repair.is_some() {
            let record = serde_json::json!({ "fit": result.fit, "repair": result.repair });
            write_json_atomic(&resolve(root, &format!("{fit_dir}/{}.json", entry.image_id)), &record)?;
        }
        match result.verdict {
            Verdict::Accepted(mask) => {
                let label = format!("{label_dir}/{}.png", entry.image_id);
                mask.save_png(resolve(root, &label))?;
                if entry.status == Status::Pending {
                    report.accepted_new += 1;
                } else {
                    report.reaccepted += 1;
                }
                if let Some(truth) = &cfg.truth_dir {
                    quality_pairs.push((label.clone(), format!("{truth}/{}.png", entry.image_id)));
                }
                entry.status = Status::PseudoLabeled;
                entry.label_path = Some(label);
                entry.accepted_at_iteration = Some(i);
            }
            Verdict::Rejected(reasons) => {
                for r in reasons {
                    *report.rejection_reasons.entry(r).or_default() += 1;
                }
                // a refreshed pseudo-label that fails keeps its earlier label
                if entry.status == Status::Pending {
                    entry.status = Status::Rejected;
                    report.rejected += 1;
                }
            }
        }
    }
    report.accepted_quality = score_dir(root, &quality_pairs)?;

    report.training_set_size = train_model(root, cfg, predictor, &next, i)?;
    next.iteration = i;
    report.counts = next.counts();
    next.save(&cfg.manifest_path(root))?;
    *manifest = next;
    Ok(report)
}

fn report_path(root: &Path, cfg: &LoopConfig, name: &str) -> std::path::PathBuf {
    resolve(root, &cfg.state(format!("reports/{name}.json")))
}

/// Runs the loop from whatever state the workspace is in until the pool is
/// exhausted, the iteration cap is hit, or an iteration makes no progress.
pub fn run_loop(
    root: &Path,
    cfg: &LoopConfig,
    process: &ProcessConfig,
    predictor: &dyn Predictor,
) -> Result<LoopReport> {
    cfg.validate()?;
    process.validate()?;
    let _lock = WorkspaceLock::acquire(&resolve(root, &cfg.state("loop.lock")))?;
    let manifest_path = cfg.manifest_path(root);
    let mut manifest = if manifest_path.is_file() {
        let m = DatasetManifest::load(&manifest_path)?;
        if m.mode != cfg.mode {
            return Err(Error::Config(format!(
                "workspace was started in {} mode, config asks for {}",
                m.mode.name(),
                cfg.mode.name()
            )));
        }
        m
    } else {
        let m = init_manifest(root, cfg)?;
        m.save(&manifest_path)?;
        m
    };

    let baseline_path = report_path(root, cfg, "baseline");
    if !manifest.baseline_trained {
        let n = train_model(root, cfg, predictor, &manifest, 0)?;
        info!("{}: trained seed model on {n} labels", cfg.mode.name());
        let validation = score_validation(root, cfg, predictor, 0)?;
        write_json_atomic(&baseline_path, &validation)?;
        manifest.baseline_trained = true;
        manifest.save(&manifest_path)?;
    }
    let baseline_validation: Option<MetricReport> = read_json(&baseline_path)?;
    let mut iterations = (1..=manifest.iteration)
        .map(|i| read_json(&report_path(root, cfg, &format!("iter_{i}"))))
        .collect::<Result<Vec<IterationReport>>>()?;

    let stop_reason = loop {
        if manifest.counts().remaining() == 0 {
            break StopReason::PoolExhausted;
        }
        if manifest.iteration >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        let mut report = run_iteration(root, cfg, process, predictor, &mut manifest)?;
        report.validation = score_validation(root, cfg, predictor, report.iteration)?;
        write_json_atomic(&report_path(root, cfg, &format!("iter_{}", report.iteration)), &report)?;
        info!(
            "{} iteration {}: {} drawn, {} accepted, {} remaining",
            cfg.mode.name(),
            report.iteration,
            report.drawn,
            report.accepted_new,
            report.counts.remaining()
        );
        let stalled = report.accepted_new == 0;
        iterations.push(report);
        if stalled && cfg.stop_when_no_progress {
            break StopReason::NoProgress;
        }
    };

    let report = LoopReport {
        mode: cfg.mode,
        baseline_validation,
        iterations,
        stop_reason,
        counts: manifest.counts(),
    };
    write_json_atomic(&report_path(root, cfg, "loop"), &report)?;
    Ok(report)
}

/// Current manifest and completed iteration reports without running anything.
pub fn loop_status(root: &Path, cfg: &LoopConfig) -> Result<(DatasetManifest, Vec<IterationReport>)> {
    let manifest = DatasetManifest::load(&cfg.manifest_path(root))?;
    let reports = (1..=manifest.iteration)
        .map(|i| read_json(&report_path(root, cfg, &format!("iter_{i}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, reports))
}
