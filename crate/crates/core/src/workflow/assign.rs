use std::collections::BTreeMap;

use serde::Serialize;

use super::{best_models, load_days, DayScores};
use crate::decision::{assign_dwell, rank_topk, DwellChoice, RankedEntry, ScoreSet};
use crate::governance::{ExperimentRecord, GovernanceError, Registry, SelectionMetric};
use crate::labeling::TaskId;
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub split_id: u32,
    pub task_id: TaskId,
    pub threshold: f64,
    /// `previous_validation` or `own_training`.
    pub source: &'static str,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decisions {
    pub service: Vec<(Timestamp, Vec<RankedEntry>)>,
    pub dwell: Vec<(Timestamp, Vec<DwellChoice>)>,
    pub thresholds: Vec<ThresholdRow>,
}

/// Threshold for each split of one dwell task: the Youden threshold of the
/// previous split's validation ROC, or the split's own training ROC for the
/// first split (or when the previous one is undefined).
pub fn dwell_thresholds(best: &[ExperimentRecord]) -> Vec<ThresholdRow> {
    best.iter()
        .enumerate()
        .map(|(i, r)| {
            let prev = i.checked_sub(1).and_then(|p| best[p].validation_threshold);
            let (threshold, source) = match prev {
                Some(t) => (t, "previous_validation"),
                None => (r.train_threshold.unwrap_or(0.5), "own_training"),
            };
            ThresholdRow {
                split_id: r.split_id,
                task_id: r.task_id,
                threshold,
                source,
            }
        })
        .collect()
}

fn score_set(day: &DayScores, task: TaskId) -> ScoreSet {
    ScoreSet::new(day.as_of, task, day.rows.iter().map(|r| (r.0.clone(), r.1)).collect())
}

/// Service top-k lists and dwell assignments for every validation day of
/// every split, from the best model per (task, split).
pub fn assign(registry: &Registry, metric: SelectionMetric) -> Result<Decisions, GovernanceError> {
    let records = registry.records()?;
    if records.is_empty() {
        return Err(GovernanceError::NoExperiments("any".into()));
    }
    let best = best_models(&records, metric)?;
    let mut out = Decisions::default();
    if let Some(service) = best.get(&TaskId::Service) {
        for r in service {
            for day in load_days(registry, r)? {
                if day.rows.is_empty() {
                    continue;
                }
                let top = rank_topk(&score_set(&day, TaskId::Service), r.k).expect("non-empty, k >= 1");
                out.service.push((day.as_of, top));
            }
        }
    }
    if TaskId::DWELL.iter().all(|t| best.contains_key(t)) {
        let mut per_split: BTreeMap<u32, Vec<(Vec<DayScores>, f64)>> = BTreeMap::new();
        for task in TaskId::DWELL {
            let rows = dwell_thresholds(&best[&task]);
            for (r, th) in best[&task].iter().zip(&rows) {
                per_split.entry(r.split_id).or_default().push((load_days(registry, r)?, th.threshold));
            }
            out.thresholds.extend(rows);
        }
        for (_, labels) in per_split {
            if labels.len() != 8 {
                continue;
            }
            let thresholds: Vec<f64> = labels.iter().map(|l| l.1).collect();
            for d in 0..labels[0].0.len() {
                let sets: Vec<ScoreSet> = labels.iter().zip(TaskId::DWELL).map(|(l, t)| score_set(&l.0[d], t)).collect();
                if sets[0].entries.is_empty() {
                    continue;
                }
                let choices = assign_dwell(&sets, &thresholds)
                    .map_err(|e| GovernanceError::Integrity(format!("dwell assignment: {e}")))?;
                out.dwell.push((labels[0].0[d].as_of, choices));
            }
        }
    }
    Ok(out)
}
