//! Binary outcome labels anchored at a prediction instant: pre-clearance
//! service within seven days, and eight mutually exclusive dwell categories.

use std::io::Write;
use std::str::FromStr;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::ontology::{EventKind, OntologyError, OntologyStore};
use crate::time::{days, elapsed_days, format_timestamp, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Service,
    Dt1,
    Dt2,
    Dt3,
    Dt4,
    Dt5,
    Dt6,
    Dt7,
    Dt8,
}

impl TaskId {
    pub const ALL: [TaskId; 9] = [
        TaskId::Service,
        TaskId::Dt1,
        TaskId::Dt2,
        TaskId::Dt3,
        TaskId::Dt4,
        TaskId::Dt5,
        TaskId::Dt6,
        TaskId::Dt7,
        TaskId::Dt8,
    ];
    pub const DWELL: [TaskId; 8] = [
        TaskId::Dt1,
        TaskId::Dt2,
        TaskId::Dt3,
        TaskId::Dt4,
        TaskId::Dt5,
        TaskId::Dt6,
        TaskId::Dt7,
        TaskId::Dt8,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Service => "service",
            TaskId::Dt1 => "dt1",
            TaskId::Dt2 => "dt2",
            TaskId::Dt3 => "dt3",
            TaskId::Dt4 => "dt4",
            TaskId::Dt5 => "dt5",
            TaskId::Dt6 => "dt6",
            TaskId::Dt7 => "dt7",
            TaskId::Dt8 => "dt8",
        }
    }

    /// Dwell category 1..=8, `None` for the service task.
    pub fn dwell_category(self) -> Option<u8> {
        TaskId::DWELL.iter().position(|&t| t == self).map(|i| i as u8 + 1)
    }

    pub fn from_dwell_category(m: u8) -> Option<TaskId> {
        TaskId::DWELL.get((m as usize).checked_sub(1)?).copied()
    }

    /// Time after the prediction instant by which the label is always known:
    /// one day for the arrival itself plus the outcome window.
    pub fn maturity(self) -> TimeDelta {
        match self.dwell_category() {
            None => days(7),
            Some(m) => days(1 + upper_edge(m).map_or(8, |e| e as i64)),
        }
    }

    pub fn spec(self) -> TaskSpec {
        let description = match self.dwell_category() {
            None => "requires pre-clearance service within seven days".to_string(),
            Some(1) => "leaves the terminal in less than two days".to_string(),
            Some(8) => "leaves the terminal after eight days or more".to_string(),
            Some(m) => format!("leaves the terminal on day {m}"),
        };
        TaskSpec {
            task_id: self,
            horizon: self.maturity(),
            description,
        }
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| LabelError::UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub task_id: TaskId,
    pub horizon: TimeDelta,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
    Undetermined,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "1",
            Label::Negative => "0",
            Label::Undetermined => "NA",
        }
    }

    pub fn as_bool(self) -> Option<bool> {
        match self {
            Label::Positive => Some(true),
            Label::Negative => Some(false),
            Label::Undetermined => None,
        }
    }

    fn from_bool(b: bool) -> Self {
        if b {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("exit {exit} is not after arrival {arrival}")]
    ExitNotAfterArrival { arrival: String, exit: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Store(#[from] OntologyError),
}

/// Exclusive upper edge in days of dwell category `m`; `None` for the open-ended dt8.
fn upper_edge(m: u8) -> Option<u32> {
    match m {
        1 => Some(2),
        2..=7 => Some(m as u32 + 1),
        _ => None,
    }
}

/// Category 1..=8 from elapsed days, with day `d = floor(days)`.
pub fn dwell_category(elapsed: f64) -> u8 {
    match elapsed.floor() as i64 {
        d if d < 2 => 1,
        d @ 2..=7 => d as u8,
        _ => 8,
    }
}

pub fn dwell_label(arrival: Timestamp, exit: Timestamp) -> Result<TaskId, LabelError> {
    if exit <= arrival {
        return Err(LabelError::ExitNotAfterArrival {
            arrival: format_timestamp(arrival),
            exit: format_timestamp(exit),
        });
    }
    Ok(TaskId::from_dwell_category(dwell_category(elapsed_days(arrival, exit))).expect("category in 1..=8"))
}

fn observed(store: &OntologyStore, idx: usize, kind: EventKind) -> Option<Timestamp> {
    let horizon = store.horizon();
    store
        .events_of(idx)
        .iter()
        .find(|e| e.kind == kind && e.at < horizon)
        .map(|e| e.at)
}

fn service_label_at(store: &OntologyStore, idx: usize, as_of: Timestamp) -> Label {
    let end = as_of + days(7);
    let horizon = store.horizon();
    let seen = store
        .events_of(idx)
        .iter()
        .any(|e| e.kind == EventKind::Service && e.at >= as_of && e.at < end && e.at < horizon);
    if seen {
        Label::Positive
    } else if horizon < end {
        Label::Undetermined
    } else {
        Label::Negative
    }
}

/// Observed dwell category, or the categories already ruled out when the
/// container has not exited by the horizon.
fn dwell_label_at(store: &OntologyStore, idx: usize, m: u8) -> Label {
    let Some(arrival) = observed(store, idx, EventKind::Arrival) else {
        return Label::Undetermined;
    };
    if let Some(exit) = observed(store, idx, EventKind::Exit) {
        return match dwell_label(arrival, exit) {
            Ok(t) => Label::from_bool(t.dwell_category() == Some(m)),
            Err(_) => Label::Undetermined,
        };
    }
    let elapsed = elapsed_days(arrival, store.horizon());
    if elapsed >= 8.0 {
        return Label::from_bool(m == 8);
    }
    match upper_edge(m) {
        Some(edge) if elapsed >= edge as f64 => Label::Negative,
        _ => Label::Undetermined,
    }
}

pub fn service_label(store: &OntologyStore, container_id: &str, as_of: Timestamp) -> Result<Label, LabelError> {
    Ok(service_label_at(store, store.index_of(container_id)?, as_of))
}

pub fn task_label(store: &OntologyStore, idx: usize, task: TaskId, as_of: Timestamp) -> Label {
    match task.dwell_category() {
        None => service_label_at(store, idx, as_of),
        Some(m) => dwell_label_at(store, idx, m),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    pub task_id: TaskId,
    pub as_of: Timestamp,
    pub entries: Vec<(String, Label)>,
}

impl LabelVector {
    pub fn positives(&self) -> usize {
        self.entries.iter().filter(|e| e.1 == Label::Positive).count()
    }

    pub fn determined(&self) -> usize {
        self.entries.iter().filter(|e| e.1 != Label::Undetermined).count()
    }
}

pub fn build_labels(
    store: &OntologyStore,
    cohort: &[String],
    as_of: Timestamp,
    tasks: &[TaskId],
) -> Result<Vec<LabelVector>, LabelError> {
    let idx: Vec<usize> = cohort
        .iter()
        .map(|id| store.index_of(id))
        .collect::<Result<_, _>>()?;
    Ok(tasks
        .iter()
        .map(|&task| LabelVector {
            task_id: task,
            as_of,
            entries: cohort
                .iter()
                .zip(&idx)
                .map(|(id, &i)| (id.clone(), task_label(store, i, task, as_of)))
                .collect(),
        })
        .collect())
}

/// Writes label rows `container_id,task_id,label,as_of`.
pub fn write_labels<W: Write>(out: W, vectors: &[LabelVector]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["container_id", "task_id", "label", "as_of"])?;
    for v in vectors {
        let as_of = format_timestamp(v.as_of);
        for (id, label) in &v.entries {
            w.write_record([id.as_str(), v.task_id.as_str(), label.as_str(), &as_of])?;
        }
    }
    w.flush()?;
    Ok(())
}
