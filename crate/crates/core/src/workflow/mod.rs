//! Stages downstream of the experiment registry: operational decisions and
//! the evaluation report bundle.

mod assign;
mod evaluate;

pub use assign::{assign, dwell_thresholds, Decisions, ThresholdRow};
pub use evaluate::{evaluate, write_bundle, BaselineSummary, EvalSettings, Evaluation, TaskSummary};

use std::collections::BTreeMap;

use crate::governance::{select_best, ExperimentRecord, GovernanceError, Registry, SelectionMetric};
use crate::labeling::TaskId;
use crate::time::{parse_timestamp, Timestamp};

/// One validation day of a record's scores, in stored cohort order.
#[derive(Debug, Clone, PartialEq)]
pub struct DayScores {
    pub as_of: Timestamp,
    pub rows: Vec<(String, f64, Option<bool>)>,
}

pub(crate) fn load_days(registry: &Registry, r: &ExperimentRecord) -> Result<Vec<DayScores>, GovernanceError> {
    let mut days: BTreeMap<Timestamp, Vec<(String, f64, Option<bool>)>> = BTreeMap::new();
    for row in registry.load_scores(r)? {
        let t = parse_timestamp(&row.as_of)
            .ok_or_else(|| GovernanceError::Integrity(format!("bad as_of `{}` in {}", row.as_of, r.scores_path)))?;
        let label = match row.label.as_str() {
            "1" => Some(true),
            "0" => Some(false),
            _ => None,
        };
        days.entry(t).or_default().push((row.container_id, row.score, label));
    }
    Ok(days.into_iter().map(|(as_of, rows)| DayScores { as_of, rows }).collect())
}

/// Best record per split for each task present in the registry.
pub fn best_models(records: &[ExperimentRecord], metric: SelectionMetric) -> Result<BTreeMap<TaskId, Vec<ExperimentRecord>>, GovernanceError> {
    let mut out = BTreeMap::new();
    for task in TaskId::ALL {
        if records.iter().any(|r| r.task_id == task) {
            out.insert(task, select_best(records, task, metric)?);
        }
    }
    Ok(out)
}
