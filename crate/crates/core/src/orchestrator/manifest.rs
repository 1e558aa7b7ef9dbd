use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Which custom process runs between prediction and training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Confident self-training: every prediction is accepted as-is.
    #[serde(rename = "CST")]
    Cst,
    /// Filter-based self-training: the Y-shaped tree filter gates and cleans.
    #[serde(rename = "FBST")]
    Fbst,
    /// Automating-the-loop: filter, template fit and repair.
    #[serde(rename = "ATL")]
    Atl,
    /// Human-adjusted labels dropped into a watched directory.
    External,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Cst, Mode::Fbst, Mode::Atl, Mode::External];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Cst => "CST",
            Mode::Fbst => "FBST",
            Mode::Atl => "ATL",
            Mode::External => "External",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Seed,
    Unlabeled,
    /// Drawn into the current iteration's batch.
    Pending,
    PseudoLabeled,
    /// Rejected in the most recent iteration that processed it; back in the
    /// pool for later draws.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ManifestEntry {
    pub image_id: String,
    /// Relative to the workspace root, `/`-separated.
    pub image_path: String,
    pub label_path: Option<String>,
    pub status: Status,
    pub accepted_at_iteration: Option<usize>,
    pub last_predicted_at_iteration: Option<usize>,
    /// Position in the seeded shuffle that breaks ties between draws.
    pub draw_rank: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StatusCounts {
    pub seed: usize,
    pub unlabeled: usize,
    pub pending: usize,
    pub pseudo_labeled: usize,
    pub rejected: usize,
}

impl StatusCounts {
    pub fn total(&self) -> usize {
        self.seed + self.unlabeled + self.pending + self.pseudo_labeled + self.rejected
    }

    /// Images still waiting for an accepted label.
    pub fn remaining(&self) -> usize {
        self.unlabeled + self.pending + self.rejected
    }
}

/// One row of the training manifest handed to the predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainEntry {
    pub image_path: String,
    pub label_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub mode: Mode,
    /// Last completed iteration; 0 before the first.
    pub iteration: usize,
    /// Whether the seed-only model has been trained.
    pub baseline_trained: bool,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a fresh manifest. `images` are `(id, path)` pairs and `seeds`
    /// maps seed ids to their label paths. Entries are sorted by id and
    /// unlabeled ones get a draw rank from a shuffle seeded by `rng_seed`.
    pub fn new(
        mode: Mode,
        images: &[(String, String)],
        seeds: &[(String, String)],
        rng_seed: u64,
    ) -> Result<Self> {
        let mut entries: Vec<ManifestEntry> = images
            .iter()
            .map(|(id, path)| {
                let label = seeds.iter().find(|(s, _)| s == id).map(|(_, l)| l.clone());
                ManifestEntry {
                    image_id: id.clone(),
                    image_path: path.clone(),
                    status: if label.is_some() { Status::Seed } else { Status::Unlabeled },
                    label_path: label,
                    accepted_at_iteration: None,
                    last_predicted_at_iteration: None,
                    draw_rank: 0,
                }
            })
            .collect();
        entries.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::Data(format!("duplicate image id {}", w[0].image_id)));
        }
        for (id, _) in seeds {
            if !entries.iter().any(|e| &e.image_id == id) {
                return Err(Error::Data(format!("seed label {id} has no matching image")));
            }
        }

        let mut order: Vec<usize> = (0..entries.len())
            .filter(|&i| entries[i].status == Status::Unlabeled)
            .collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
        for (rank, &i) in order.iter().enumerate() {
            entries[i].draw_rank = rank;
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            mode,
            iteration: 0,
            baseline_trained: false,
            entries,
        })
    }

    pub fn counts(&self) -> StatusCounts {
        let mut c = StatusCounts::default();
        for e in &self.entries {
            match e.status {
                Status::Seed => c.seed += 1,
                Status::Unlabeled => c.unlabeled += 1,
                Status::Pending => c.pending += 1,
                Status::PseudoLabeled => c.pseudo_labeled += 1,
                Status::Rejected => c.rejected += 1,
            }
        }
        c
    }

    /// Seeds plus every accepted pseudo-label, in entry order.
    pub fn training_set(&self) -> Vec<TrainEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.status, Status::Seed | Status::PseudoLabeled))
            .filter_map(|e| {
                e.label_path.as_ref().map(|l| TrainEntry {
                    image_path: e.image_path.clone(),
                    label_path: l.clone(),
                })
            })
            .collect()
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == id)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest: Self = read_json(path)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported manifest schema version {}",
                path.display(),
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_atomic(path, self)
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline, written to a sibling temp file and
/// renamed into place so readers never see a partial file.
pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Exclusive ownership of a loop workspace; released on drop.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

impl WorkspaceLock {
    pub fn acquire(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        match OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(_) => Ok(Self {
                path: path.to_path_buf(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(path.to_path_buf()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
