//! The per-image custom process that turns a prediction into a pseudo-label
//! or a rejection.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{atl_pre_filter, y_shaped_tree_filter, FilterConfig};
use crate::ga::{fit_tree, FitResult, GaConfig};
use crate::mask::{to_partial_skeleton, Mask};
use crate::repair::{repair, RepairConfig, RepairReport};

use super::manifest::Mode;

pub const REASON_Y_FILTER: &str = "y-filter";
pub const REASON_EMPTY_SKELETON: &str = "empty skeleton";
pub const REASON_NO_EXTERNAL_LABEL: &str = "no external label";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub filter: FilterConfig,
    pub ga: GaConfig,
    pub repair: RepairConfig,
    /// Directory scanned for `<id>.png` in External mode.
    pub external_dir: Option<PathBuf>,
}

impl ProcessConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.ga.validate()?;
        self.repair.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Accepted(Mask),
    Rejected(Vec<String>),
}

/// A verdict plus the intermediate results worth keeping for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessResult {
    pub verdict: Verdict,
    pub fit: Option<FitResult>,
    pub repair: Option<RepairReport>,
}

impl ProcessResult {
    fn verdict(verdict: Verdict) -> Self {
        Self {
            verdict,
            fit: None,
            repair: None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        matches!(self.verdict, Verdict::Accepted(_))
    }
}

/// Applies the mode's process to one prediction. `ga_seed` replaces the GA's
/// configured seed so each image gets its own reproducible stream.
pub fn custom_process(
    mode: Mode,
    image_id: &str,
    prediction: &Mask,
    cfg: &ProcessConfig,
    ga_seed: u64,
) -> Result<ProcessResult> {
    match mode {
        Mode::Cst => Ok(ProcessResult::verdict(Verdict::Accepted(prediction.clone()))),
        Mode::Fbst => {
            let y = y_shaped_tree_filter(prediction, &cfg.filter);
            Ok(ProcessResult::verdict(if y.passes {
                Verdict::Accepted(y.mask)
            } else {
                Verdict::Rejected(vec![REASON_Y_FILTER.into()])
            }))
        }
        Mode::Atl => atl_process(prediction, cfg, ga_seed),
        Mode::External => {
            let dir = cfg
                .external_dir
                .as_ref()
                .ok_or_else(|| Error::Config("External mode needs external_dir".into()))?;
            let path = dir.join(format!("{image_id}.png"));
            if !path.is_file() {
                return Ok(ProcessResult::verdict(Verdict::Rejected(vec![
                    REASON_NO_EXTERNAL_LABEL.into(),
                ])));
            }
            let label = Mask::load_png(&path)?;
            label.same_dims(prediction)?;
            Ok(ProcessResult::verdict(Verdict::Accepted(label)))
        }
    }
}

/// Pre-filter, fit the template to the partial skeleton, repair.
pub fn atl_process(prediction: &Mask, cfg: &ProcessConfig, ga_seed: u64) -> Result<ProcessResult> {
    let (w, h) = prediction.dims();
    let filtered = atl_pre_filter(prediction, &cfg.filter).mask;
    let skeleton = to_partial_skeleton(&filtered);
    if skeleton.is_empty() {
        return Ok(ProcessResult::verdict(Verdict::Rejected(vec![
            REASON_EMPTY_SKELETON.into(),
        ])));
    }
    let ga = GaConfig {
        rng_seed: ga_seed,
        ..cfg.ga.clone()
    };
    let fit = fit_tree(&skeleton, &ga, w, h)?;
    let outcome = repair(&filtered, &fit, &cfg.repair, &cfg.filter);
    let report = outcome.report(&fit);
    let verdict = if outcome.accepted {
        Verdict::Accepted(outcome.mask)
    } else {
        Verdict::Rejected(outcome.reasons)
    };
    Ok(ProcessResult {
        verdict,
        fit: Some(fit),
        repair: Some(report),
    })
}
