//! A predictor that "learns" by lowering the degradation severity as the
//! training set grows, reading the hidden ground truth next to each input.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::orchestrator::manifest::{read_json, write_json_atomic};
use crate::orchestrator::predictor::{
    output_path, read_input_list, read_train_manifest, resolve, stem, Predictor,
};
use crate::seeds::derive_seed;

use super::{degrade, DegradationConfig};

/// Piecewise-linear severity over training-set size, flat beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityCurve {
    /// `(training-set size, severity)` knots, sizes strictly increasing.
    pub points: Vec<(usize, f64)>,
}

impl Default for QualityCurve {
    fn default() -> Self {
        Self {
            points: vec![(12, 1.0), (36, 0.6), (72, 0.35), (120, 0.2)],
        }
    }
}

impl QualityCurve {
    pub fn constant(severity: f64) -> Self {
        Self {
            points: vec![(0, severity)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("quality curve needs at least one point".into()));
        }
        for &(_, s) in &self.points {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Config("quality curve severities must lie in [0, 1]".into()));
            }
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config("quality curve sizes must be strictly increasing".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Config(
                    "quality curve severity must not increase with training-set size".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn severity(&self, size: usize) -> f64 {
        let pts = &self.points;
        if size <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if size <= x1 {
                let f = (size - x0) as f64 / (x1 - x0) as f64;
                return y0 + (y1 - y0) * f;
            }
        }
        pts[pts.len() - 1].1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MockModel {
    pub training_set_size: usize,
}

pub const MODEL_FILE: &str = "model.json";

/// `a/b/images/x.png` -> `a/b/truth/x.png`.
pub fn truth_path_for(input: &str) -> Result<String> {
    let (dir, file) = input.rsplit_once('/').unwrap_or(("", input));
    let parent = match dir.rsplit_once('/') {
        Some((p, "images")) => format!("{p}/"),
        None if dir == "images" => String::new(),
        _ => {
            return Err(Error::Predictor(format!(
                "mock predictor input {input} is not inside an images/ directory"
            )))
        }
    };
    Ok(format!("{parent}truth/{file}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockPredictor {
    pub degradation: DegradationConfig,
    pub quality: QualityCurve,
    pub seed: u64,
}

impl MockPredictor {
    fn check_relative(p: &str) -> Result<()> {
        if Path::new(p).is_absolute() {
            return Err(Error::Predictor(format!("protocol paths must be relative: {p}")));
        }
        Ok(())
    }
}

impl Predictor for MockPredictor {
    fn train(&self, root: &Path, train_manifest: &str, model_dir: &str) -> Result<()> {
        Self::check_relative(train_manifest)?;
        Self::check_relative(model_dir)?;
        let entries = read_train_manifest(root, train_manifest)
            .map_err(|e| Error::Predictor(format!("unreadable training manifest: {e}")))?;
        let model = MockModel {
            training_set_size: entries.len(),
        };
        write_json_atomic(&resolve(root, &format!("{model_dir}/{MODEL_FILE}")), &model)
    }

    fn predict(&self, root: &Path, model_dir: &str, input_list: &str, output_dir: &str) -> Result<()> {
        for p in [model_dir, input_list, output_dir] {
            Self::check_relative(p)?;
        }
        let model: MockModel = read_json(&resolve(root, &format!("{model_dir}/{MODEL_FILE}")))
            .map_err(|e| Error::Predictor(format!("no trained model in {model_dir}: {e}")))?;
        let inputs = read_input_list(root, input_list)?;
        let n = model.training_set_size;
        let severity = self.quality.severity(n);
        inputs.par_iter().try_for_each(|input| {
            let truth = Mask::load_png(resolve(root, &truth_path_for(input)?))?;
            let id = stem(input);
            let cfg = DegradationConfig {
                rng_seed: derive_seed(self.seed, id, n as u64),
                occlusion_seed: derive_seed(self.seed, id, u64::MAX),
                ..self.degradation.scaled(severity)
            };
            degrade(&truth, &cfg).save_png(resolve(root, &output_path(output_dir, input)))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::manifest::TrainEntry;
    use crate::orchestrator::predictor::{write_input_list, write_train_manifest};

    #[test]
    fn severity_interpolates_and_clamps() {
        let q = QualityCurve::default();
        q.validate().unwrap();
        assert_eq!(q.severity(0), 1.0);
        assert_eq!(q.severity(12), 1.0);
        assert!((q.severity(24) - 0.8).abs() < 1e-12);
        assert_eq!(q.severity(500), 0.2);
        let mut prev = f64::INFINITY;
        for n in 0..200 {
            assert!(q.severity(n) <= prev);
            prev = q.severity(n);
        }
        let rising = QualityCurve {
            points: vec![(0, 0.2), (10, 0.5)],
        };
        assert!(rising.validate().is_err());
    }

    #[test]
    fn truth_paths() {
        assert_eq!(truth_path_for("images/a.png").unwrap(), "truth/a.png");
        assert_eq!(
            truth_path_for("validation/images/v.png").unwrap(),
            "validation/truth/v.png"
        );
        assert!(truth_path_for("other/a.png").is_err());
    }

    #[test]
    fn perfect_model_returns_truth() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let mut truth = Mask::new(16, 16);
        truth.set(4, 4, true);
        truth.save_png(root.join("truth/a.png")).unwrap();
        truth.save_png(root.join("images/a.png")).unwrap();
        let mock = MockPredictor {
            degradation: DegradationConfig::default(),
            quality: QualityCurve::constant(0.0),
            seed: 1,
        };
        let entries = vec![TrainEntry {
            image_path: "images/a.png".into(),
            label_path: "truth/a.png".into(),
        }];
        write_train_manifest(root, "train.json", &entries).unwrap();
        mock.train(root, "train.json", "model").unwrap();
        write_input_list(root, "in.txt", &["images/a.png".to_string()]).unwrap();
        mock.predict(root, "model", "in.txt", "out").unwrap();
        assert_eq!(Mask::load_png(root.join("out/a.png")).unwrap(), truth);

        assert!(mock.predict(root, "missing", "in.txt", "out").is_err());
        assert!(mock.train(root, "/abs/train.json", "model").is_err());
    }
}
