//! Run configuration: one JSON file with a section per component.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataio::{load_manifest, split_folds, FoldSplit, NoduleSample, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::evalharness::{CrossvalSpec, EvalConfig};
use crate::losses::LossConfig;
use crate::model::NetConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Manifest file, or a directory holding `manifest.json`.
    pub dataset: Option<PathBuf>,
    /// Run directory for `config.json`, `checkpoints/`, `logs/` and `reports/`.
    pub out_dir: Option<PathBuf>,
    /// Seed of the fold split. Initialization and shuffling use `train.seed`.
    pub seed: u64,
    pub folds: usize,
    /// Held-out fold for `train`; `None` trains on every sample.
    pub fold: Option<usize>,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            out_dir: None,
            seed: 0,
            folds: 5,
            fold: None,
            net: NetConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run config serializes");
        s.push('\n');
        s
    }

    /// Checks every section without touching the filesystem.
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.eval.validate()?;
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if let Some(f) = self.fold {
            if f >= self.folds {
                return Err(Error::Config(format!(
                    "fold {f} out of range (valid 0–{})",
                    self.folds - 1
                )));
            }
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        let p = self
            .dataset
            .as_deref()
            .ok_or_else(|| Error::Config("dataset: missing path to a manifest or dataset directory".into()))?;
        if !p.exists() {
            return Err(Error::Config(format!("dataset: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn out_path(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("out_dir: missing run directory".into()))
    }

    /// Loads the dataset and checks that every sample carries the annotations
    /// the loss and the evaluation refer to.
    pub fn load_dataset(&self) -> Result<Vec<NoduleSample>> {
        let p = self.dataset_path()?;
        let manifest = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.to_path_buf() };
        let samples = load_manifest(&manifest)?;
        if samples.is_empty() {
            return Err(Error::Data(format!("{}: no samples", manifest.display())));
        }
        let fewest = samples.iter().map(|s| s.annotations.len()).min().unwrap_or(0);
        for (field, idx) in [("loss.annotation_index", self.loss.annotation_index), ("eval.annotation", self.eval.annotation)] {
            if idx >= fewest {
                return Err(Error::Config(format!(
                    "{field} {idx} out of range: some samples have only {fewest} annotations"
                )));
            }
        }
        Ok(samples)
    }

    pub fn split(&self, samples: &[NoduleSample]) -> Result<FoldSplit> {
        let ids: Vec<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
        split_folds(&ids, self.folds, self.seed)
    }

    pub fn crossval_spec(&self) -> CrossvalSpec {
        CrossvalSpec {
            k: self.folds,
            seed: self.seed,
            net: self.net.clone(),
            train: self.train.clone(),
            loss: self.loss.clone(),
            eval: self.eval,
        }
    }

    /// Creates the run directory and writes the config echo into it.
    pub fn write_echo(&self) -> Result<PathBuf> {
        let dir = self.out_path()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("config.json");
        fs::write(&p, self.to_json()).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
