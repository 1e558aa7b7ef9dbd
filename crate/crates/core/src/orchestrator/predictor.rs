//! The train/predict protocol between the loop and a segmentation model.
//!
//! The model is an external program invoked as
//!
//! ```text
//! <cmd> train   --train-manifest <path.json> --model-dir <dir>
//! <cmd> predict --model-dir <dir> --input-list <path.txt> --output-dir <dir>
//! ```
//!
//! with the workspace root as working directory and every path relative to
//! it. The training manifest is a JSON array of `{imagePath, labelPath}`; the
//! input list has one image path per line; `predict` writes one PNG mask per
//! input under the input's file name. Exit status 0 means success.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::error::{Error, Result};

use super::manifest::{read_json, write_atomic, write_json_atomic, TrainEntry};

pub trait Predictor: Send + Sync {
    fn train(&self, root: &Path, train_manifest: &str, model_dir: &str) -> Result<()>;

    fn predict(&self, root: &Path, model_dir: &str, input_list: &str, output_dir: &str) -> Result<()>;
}

/// Runs the protocol against an external command, e.g. `["python", "unet.py"]`.
/// The program is looked up on `PATH` unless given as an absolute path.
#[derive(Debug, Clone)]
pub struct SubprocessPredictor {
    pub command: Vec<String>,
}

impl SubprocessPredictor {
    pub fn new(command: Vec<String>) -> Result<Self> {
        if command.is_empty() || command[0].is_empty() {
            return Err(Error::Config("predictor command is empty".into()));
        }
        Ok(Self { command })
    }

    fn run(&self, root: &Path, args: &[&str]) -> Result<()> {
        let output = Command::new(&self.command[0])
            .args(&self.command[1..])
            .args(args)
            .current_dir(root)
            .output()
            .map_err(|e| Error::Predictor(format!("cannot start {}: {e}", self.command[0])))?;
        if !output.status.success() {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let tail: Vec<&str> = stderr.lines().rev().take(5).collect();
            return Err(Error::Predictor(format!(
                "`{} {}` exited with {}: {}",
                self.command.join(" "),
                args[0],
                output.status,
                tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
            )));
        }
        Ok(())
    }
}

impl Predictor for SubprocessPredictor {
    fn train(&self, root: &Path, train_manifest: &str, model_dir: &str) -> Result<()> {
        self.run(root, &["train", "--train-manifest", train_manifest, "--model-dir", model_dir])
    }

    fn predict(&self, root: &Path, model_dir: &str, input_list: &str, output_dir: &str) -> Result<()> {
        self.run(
            root,
            &[
                "predict",
                "--model-dir",
                model_dir,
                "--input-list",
                input_list,
                "--output-dir",
                output_dir,
            ],
        )
    }
}

/// Joins a workspace-relative path onto the root.
pub fn resolve(root: &Path, rel: &str) -> PathBuf {
    root.join(rel)
}

/// File stem of a workspace-relative path, used as the image id.
pub fn stem(rel: &str) -> &str {
    let name = rel.rsplit('/').next().unwrap_or(rel);
    name.strip_suffix(".png").unwrap_or(name)
}

/// Where `predict` writes the mask for `input`.
pub fn output_path(output_dir: &str, input: &str) -> String {
    format!("{output_dir}/{}.png", stem(input))
}

pub fn write_train_manifest(root: &Path, rel: &str, entries: &[TrainEntry]) -> Result<()> {
    write_json_atomic(&resolve(root, rel), entries)
}

pub fn read_train_manifest(root: &Path, rel: &str) -> Result<Vec<TrainEntry>> {
    read_json(&resolve(root, rel))
}

pub fn write_input_list(root: &Path, rel: &str, inputs: &[String]) -> Result<()> {
    let mut text = inputs.join("\n");
    text.push('\n');
    write_atomic(&resolve(root, rel), text.as_bytes())
}

pub fn read_input_list(root: &Path, rel: &str) -> Result<Vec<String>> {
    let path = resolve(root, rel);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Fails with a predictor error unless every input has an output mask.
pub fn check_outputs(root: &Path, output_dir: &str, inputs: &[String]) -> Result<()> {
    let missing: Vec<&str> = inputs
        .iter()
        .map(|i| stem(i))
        .filter(|s| !resolve(root, &format!("{output_dir}/{s}.png")).is_file())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::Predictor(format!(
            "predict produced no mask for {} input(s), first: {}",
            missing.len(),
            missing[0]
        )))
    }
}
