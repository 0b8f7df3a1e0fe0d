//! Rolling temporal splits, hyperparameter grids, the experiment loop and
//! its on-disk registry.

mod experiment;
mod registry;

pub use experiment::{run_experiment, ExperimentConfig, RunOutcome};
pub use registry::{ExperimentRecord, LeakageRow, MetricRow, Registry, ScoreRow, REGISTRY_FORMAT};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::learners::{Algorithm, HyperParams, Penalty};
use crate::time::{days, midnight, Span, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum GovernanceError {
    #[error("invalid temporal config: {0}")]
    InvalidTemporal(String),
    #[error("data span {start} to {end} is too short for one split")]
    SpanTooShort { start: String, end: String },
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("no tasks requested")]
    NoTasks,
    #[error("no labelled training rows for {task} in split {split}")]
    EmptyTraining { task: String, split: u32 },
    #[error("no completed experiments for task {0}")]
    NoExperiments(String),
    #[error("registry at {path} belongs to experiment {found}, expected {expected}")]
    ForeignRegistry { path: String, found: String, expected: String },
    #[error("registry integrity: {0}")]
    Integrity(String),
    #[error("registry io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry table error: {0}")]
    Csv(#[from] csv::Error),
    #[error("registry json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Learn(#[from] crate::learners::LearnError),
    #[error(transparent)]
    Feature(#[from] crate::featfactory::FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub data_start: NaiveDate,
    /// Exclusive.
    pub data_end: NaiveDate,
    pub train_window: Span,
    pub validation_window: Span,
    pub retrain_cadence: Span,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            data_start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            data_end: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
            train_window: Span::Days(182),
            validation_window: Span::Months(1),
            retrain_cadence: Span::Months(1),
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<(), GovernanceError> {
        if !(self.train_window.is_positive() && self.validation_window.is_positive() && self.retrain_cadence.is_positive()) {
            return Err(GovernanceError::InvalidTemporal("all durations must be positive".into()));
        }
        if self.data_end <= self.data_start {
            return Err(GovernanceError::InvalidTemporal("data_end must follow data_start".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Timestamp {
        midnight(self.data_start)
    }

    pub fn end(&self) -> Timestamp {
        midnight(self.data_end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSplit {
    pub split_id: u32,
    pub train_start: Timestamp,
    pub train_end: Timestamp,
    pub validate_start: Timestamp,
    pub validate_end: Timestamp,
}

fn daily(from: Timestamp, to: Timestamp, stride: u32) -> Vec<Timestamp> {
    let stride = stride.max(1) as i64;
    let mut out = Vec::new();
    let mut t = from;
    while t < to {
        out.push(t);
        t += days(stride);
    }
    out
}

impl TimeSplit {
    /// Daily training prediction points, every `stride` days.
    pub fn train_points(&self, stride: u32) -> Vec<Timestamp> {
        daily(self.train_start, self.train_end, stride)
    }

    pub fn validation_points(&self) -> Vec<Timestamp> {
        daily(self.validate_start, self.validate_end, 1)
    }
}

/// Validation windows step from `data_start + train_window` by the cadence
/// and must end by `data_end`; each split trains on the window just before.
pub fn generate_splits(cfg: &TemporalConfig) -> Result<Vec<TimeSplit>, GovernanceError> {
    cfg.validate()?;
    let first = cfg.train_window.after(cfg.start());
    let mut out = Vec::new();
    for i in 0.. {
        let validate_start = cfg.retrain_cadence.times_after(first, i);
        let validate_end = cfg.validation_window.after(validate_start);
        if validate_end > cfg.end() {
            break;
        }
        out.push(TimeSplit {
            split_id: i,
            train_start: cfg.train_window.before(validate_start),
            train_end: validate_start,
            validate_start,
            validate_end,
        });
    }
    if out.is_empty() {
        return Err(GovernanceError::SpanTooShort {
            start: cfg.data_start.to_string(),
            end: cfg.data_end.to_string(),
        });
    }
    Ok(out)
}

/// One configuration per algorithm family.
pub fn desk_grid(seed: u64) -> Vec<HyperParams> {
    vec![
        HyperParams::decision_tree(10, 50).with_seed(seed),
        HyperParams::random_forest(200, 10, 50).with_seed(seed),
        HyperParams::scaled_logistic(Penalty::L2, 1.0).with_seed(seed),
        HyperParams::extra_trees(500, 5, 50).with_seed(seed),
    ]
}

/// Every combination of the published grid (29 points).
pub fn full_grid(seed: u64) -> Vec<HyperParams> {
    let mut g = Vec::new();
    for depth in [5, 10, 50] {
        for mss in [10, 50, 100] {
            g.push(HyperParams::decision_tree(depth, mss));
        }
    }
    for n in [200, 300] {
        for depth in [5, 10] {
            for mss in [10, 50] {
                g.push(HyperParams::random_forest(n, depth, mss));
            }
        }
    }
    for penalty in [Penalty::L1, Penalty::L2] {
        for c in [0.0001, 0.01, 0.1, 1.0] {
            g.push(HyperParams::scaled_logistic(penalty, c));
        }
    }
    for depth in [5, 10] {
        for mss in [50, 100] {
            g.push(HyperParams::extra_trees(500, depth, mss));
        }
    }
    g.into_iter().map(|p| p.with_seed(seed)).collect()
}

/// Whether `p` uses only values from the published grid.
pub fn in_published_grid(p: &HyperParams) -> bool {
    full_grid(p.seed).iter().any(|g| g == p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    PrecisionAtK,
    RecallAtK,
    Auc,
}

impl SelectionMetric {
    fn of(self, r: &ExperimentRecord) -> f64 {
        let v = match self {
            SelectionMetric::PrecisionAtK => r.mean_precision,
            SelectionMetric::RecallAtK => r.mean_recall,
            SelectionMetric::Auc => r.mean_auc,
        };
        v.filter(|x| x.is_finite()).unwrap_or(f64::NEG_INFINITY)
    }
}

fn complexity(r: &ExperimentRecord) -> (u32, u32) {
    let p = r.hyperparams();
    let n = match p.algorithm {
        Algorithm::ScaledLogistic => 1,
        _ => p.n_estimators,
    };
    (n, p.max_depth.unwrap_or(u32::MAX))
}

/// Best record per split for `task`: highest mean metric over the split's
/// prediction points, then fewer estimators, shallower, lower grid index.
pub fn select_best(records: &[ExperimentRecord], task: crate::labeling::TaskId, metric: SelectionMetric) -> Result<Vec<ExperimentRecord>, GovernanceError> {
    let mut by_split: std::collections::BTreeMap<u32, &ExperimentRecord> = Default::default();
    for r in records.iter().filter(|r| r.task_id == task) {
        let better = match by_split.get(&r.split_id) {
            None => true,
            Some(b) => {
                let (mr, mb) = (metric.of(r), metric.of(b));
                mr > mb || (mr == mb && (complexity(r), r.grid_index) < (complexity(b), b.grid_index))
            }
        };
        if better {
            by_split.insert(r.split_id, r);
        }
    }
    if by_split.is_empty() {
        return Err(GovernanceError::NoExperiments(task.to_string()));
    }
    Ok(by_split.into_values().cloned().collect())
}
