//! Directory-of-tables experiment registry.
//!
//! ```text
//! manifest.json     experiment id, config digest, format tag
//! experiments.csv   one row per completed (task, split, grid point)
//! leakage.csv       audit results for sampled prediction points
//! models/<id>.json  fitted model
//! scores/<id>.csv   validation scores per prediction point
//! metrics/<id>.csv  per-point precision@k, recall@k, AUC
//! ```
//!
//! A record row is appended only after its three files are in place, so a
//! crash leaves at worst orphan files that the next run overwrites.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GovernanceError;
use crate::labeling::TaskId;
use crate::learners::{HyperParams, TrainedModel};

pub const REGISTRY_FORMAT: &str = "dwellcast-registry/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub record_id: String,
    pub experiment_id: String,
    pub config_digest: String,
    pub task_id: TaskId,
    pub split_id: u32,
    pub grid_index: u32,
    pub algorithm: String,
    /// JSON-encoded hyperparameters.
    pub params: String,
    pub train_start: String,
    pub validate_start: String,
    pub validate_end: String,
    pub train_rows: usize,
    pub train_positives: usize,
    pub k: usize,
    /// Youden threshold of the training-set ROC.
    pub train_threshold: Option<f64>,
    /// Youden threshold of the pooled validation ROC.
    pub validation_threshold: Option<f64>,
    pub validation_auc: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_auc: Option<f64>,
    pub model_path: String,
    pub scores_path: String,
    pub metrics_path: String,
}

impl ExperimentRecord {
    pub fn hyperparams(&self) -> HyperParams {
        serde_json::from_str(&self.params).expect("registry params are valid JSON")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub as_of: String,
    pub container_id: String,
    pub score: f64,
    /// "1", "0" or "NA".
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub record_id: String,
    pub as_of: String,
    pub k: usize,
    pub evaluated: usize,
    pub positives: usize,
    pub hits: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRow {
    pub split_id: u32,
    pub as_of: String,
    pub cells_checked: usize,
    pub findings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    experiment_id: String,
    config_digest: String,
}

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, GovernanceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| GovernanceError::Io(e.into_error()))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, GovernanceError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn append_row<T: Serialize>(path: &Path, row: &T, header: &[&str]) -> Result<(), GovernanceError> {
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(header)?;
    }
    w.serialize(row)?;
    w.flush()?;
    w.get_ref().sync_data()?;
    Ok(())
}

const RECORD_HEADER: &[&str] = &[
    "record_id",
    "experiment_id",
    "config_digest",
    "task_id",
    "split_id",
    "grid_index",
    "algorithm",
    "params",
    "train_start",
    "validate_start",
    "validate_end",
    "train_rows",
    "train_positives",
    "k",
    "train_threshold",
    "validation_threshold",
    "validation_auc",
    "mean_precision",
    "mean_recall",
    "mean_auc",
    "model_path",
    "scores_path",
    "metrics_path",
];

const LEAKAGE_HEADER: &[&str] = &["split_id", "as_of", "cells_checked", "findings"];

impl Registry {
    /// Opens `root`, creating it for `experiment_id` if absent. A registry
    /// from a different experiment is refused.
    pub fn open(root: &Path, experiment_id: &str, config_digest: &str) -> Result<Self, GovernanceError> {
        for sub in ["models", "scores", "metrics"] {
            fs::create_dir_all(root.join(sub))?;
        }
        let mpath = root.join("manifest.json");
        if mpath.exists() {
            let m: Manifest = serde_json::from_str(&fs::read_to_string(&mpath)?)?;
            if m.experiment_id != experiment_id {
                return Err(GovernanceError::ForeignRegistry {
                    path: root.display().to_string(),
                    found: m.experiment_id,
                    expected: experiment_id.to_string(),
                });
            }
        } else {
            let m = Manifest {
                format: REGISTRY_FORMAT.to_string(),
                experiment_id: experiment_id.to_string(),
                config_digest: config_digest.to_string(),
            };
            write_atomic(&mpath, serde_json::to_string_pretty(&m)?.as_bytes())?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    /// Opens an existing registry without checking its experiment id.
    pub fn open_existing(root: &Path) -> Result<Self, GovernanceError> {
        let mpath = root.join("manifest.json");
        if !mpath.exists() {
            return Err(GovernanceError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("missing {}", mpath.display()),
            )));
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn experiment_id(&self) -> Result<String, GovernanceError> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(self.root.join("manifest.json"))?)?;
        Ok(m.experiment_id)
    }

    pub fn records(&self) -> Result<Vec<ExperimentRecord>, GovernanceError> {
        let p = self.root.join("experiments.csv");
        if !p.exists() {
            return Ok(Vec::new());
        }
        read_csv(&p)
    }

    pub fn leakage(&self) -> Result<Vec<LeakageRow>, GovernanceError> {
        let p = self.root.join("leakage.csv");
        if !p.exists() {
            return Ok(Vec::new());
        }
        read_csv(&p)
    }

    pub(crate) fn append_leakage(&self, row: &LeakageRow) -> Result<(), GovernanceError> {
        append_row(&self.root.join("leakage.csv"), row, LEAKAGE_HEADER)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes the record's artifacts, then commits the record row.
    pub(crate) fn commit(
        &self,
        record: &ExperimentRecord,
        model: &TrainedModel,
        scores: &[ScoreRow],
        metrics: &[MetricRow],
    ) -> Result<(), GovernanceError> {
        write_atomic(&self.path(&record.model_path), model.to_json().as_bytes())?;
        write_atomic(&self.path(&record.scores_path), &csv_bytes(scores)?)?;
        write_atomic(&self.path(&record.metrics_path), &csv_bytes(metrics)?)?;
        append_row(&self.root.join("experiments.csv"), record, RECORD_HEADER)
    }

    pub fn load_model(&self, r: &ExperimentRecord) -> Result<TrainedModel, GovernanceError> {
        Ok(TrainedModel::load(&self.path(&r.model_path))?)
    }

    pub fn load_scores(&self, r: &ExperimentRecord) -> Result<Vec<ScoreRow>, GovernanceError> {
        read_csv(&self.path(&r.scores_path))
    }

    pub fn load_metrics(&self, r: &ExperimentRecord) -> Result<Vec<MetricRow>, GovernanceError> {
        read_csv(&self.path(&r.metrics_path))
    }

    /// Checks that record ids are unique, every record's files exist, and
    /// every metric row points back at its record.
    pub fn verify(&self) -> Result<usize, GovernanceError> {
        let records = self.records()?;
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.record_id.clone()) {
                return Err(GovernanceError::Integrity(format!("duplicate record {}", r.record_id)));
            }
            for p in [&r.model_path, &r.scores_path, &r.metrics_path] {
                if !self.path(p).exists() {
                    return Err(GovernanceError::Integrity(format!("{} missing {p}", r.record_id)));
                }
            }
            for m in self.load_metrics(r)? {
                if m.record_id != r.record_id {
                    return Err(GovernanceError::Integrity(format!(
                        "metric row in {} references {}",
                        r.metrics_path, m.record_id
                    )));
                }
            }
        }
        Ok(records.len())
    }

    /// Record ids with a committed row.
    pub fn completed(&self) -> Result<HashSet<String>, GovernanceError> {
        Ok(self.records()?.into_iter().map(|r| r.record_id).collect())
    }
}
