//! Operational outputs: the service top-k list and the unique dwell label
//! per container.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

use crate::labeling::TaskId;
use crate::time::Timestamp;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DecisionError {
    #[error("empty score set")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("expected 8 dwell score sets and thresholds, got {sets} and {thresholds}")]
    Arity { sets: usize, thresholds: usize },
    #[error("score sets cover different cohorts (mismatch at `{0}`)")]
    CohortMismatch(String),
    #[error("non-finite score for `{0}`")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub as_of: Timestamp,
    pub task_id: TaskId,
    pub entries: Vec<(String, f64)>,
}

impl ScoreSet {
    pub fn new(as_of: Timestamp, task_id: TaskId, entries: Vec<(String, f64)>) -> Self {
        Self { as_of, task_id, entries }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub container_id: String,
    /// 1 is best.
    pub rank: usize,
    pub score: f64,
}

fn by_score_then_id(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn rank_entries(entries: &[(String, f64)]) -> Vec<RankedEntry> {
    let mut v = entries.to_vec();
    v.sort_by(by_score_then_id);
    v.into_iter()
        .enumerate()
        .map(|(i, (container_id, score))| RankedEntry {
            container_id,
            rank: i + 1,
            score,
        })
        .collect()
}

/// Score descending, id ascending on ties; the first `min(k, n)` entries.
pub fn rank_topk(scores: &ScoreSet, k: usize) -> Result<Vec<RankedEntry>, DecisionError> {
    if k == 0 {
        return Err(DecisionError::ZeroK);
    }
    if scores.entries.is_empty() {
        return Err(DecisionError::Empty);
    }
    if let Some((id, _)) = scores.entries.iter().find(|e| !e.1.is_finite()) {
        return Err(DecisionError::NonFinite(id.clone()));
    }
    let mut r = rank_entries(&scores.entries);
    r.truncate(k);
    Ok(r)
}

/// Containers with `score > threshold`, ranked (steps 1 and 2 of the rule).
pub fn selected_ranking(scores: &ScoreSet, threshold: f64) -> Vec<RankedEntry> {
    let selected: Vec<(String, f64)> = scores.entries.iter().filter(|e| e.1 > threshold).cloned().collect();
    rank_entries(&selected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellChoice {
    pub container_id: String,
    pub label: TaskId,
    /// Rank among containers selected for `label`; for fallback rows the
    /// rank within that label's full cohort ordering.
    pub rank: usize,
    pub score: f64,
    pub margin: f64,
    /// Set when no label's threshold was exceeded.
    pub fallback: bool,
}

/// Unique dwell label per container from the eight dwell score sets.
///
/// 1. a label selects containers with `score > threshold`;
/// 2. selected containers are ranked per label by score (rank 1 best);
/// 3. each container takes the label where its rank is smallest, then the
///    larger margin `score - threshold`, then the lower label index.
///
/// Containers selected by no label take the label of largest margin and are
/// flagged. Output is ordered by container id.
pub fn assign_dwell(sets: &[ScoreSet], thresholds: &[f64]) -> Result<Vec<DwellChoice>, DecisionError> {
    if sets.len() != 8 || thresholds.len() != 8 {
        return Err(DecisionError::Arity {
            sets: sets.len(),
            thresholds: thresholds.len(),
        });
    }
    let mut ids: Vec<&str> = sets[0].entries.iter().map(|e| e.0.as_str()).collect();
    ids.sort_unstable();
    for s in sets {
        let mut other: Vec<&str> = s.entries.iter().map(|e| e.0.as_str()).collect();
        other.sort_unstable();
        if other != ids {
            let bad = other
                .iter()
                .zip(&ids)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.to_string())
                .unwrap_or_else(|| "<size>".to_string());
            return Err(DecisionError::CohortMismatch(bad));
        }
        if let Some((id, _)) = s.entries.iter().find(|e| !e.1.is_finite()) {
            return Err(DecisionError::NonFinite(id.clone()));
        }
    }
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    // best[c] = (rank, margin, label index) over labels selecting c
    let mut best: Vec<Option<(usize, f64, usize, f64)>> = vec![None; ids.len()];
    let mut full_rank = vec![[0usize; 8]; ids.len()];
    let mut scores = vec![[0f64; 8]; ids.len()];
    for (l, s) in sets.iter().enumerate() {
        for e in rank_entries(&s.entries) {
            let c = pos[e.container_id.as_str()];
            full_rank[c][l] = e.rank;
            scores[c][l] = e.score;
        }
        for e in selected_ranking(s, thresholds[l]) {
            let c = pos[e.container_id.as_str()];
            let margin = e.score - thresholds[l];
            let better = match best[c] {
                None => true,
                Some((r, m, _, _)) => e.rank < r || (e.rank == r && margin > m),
            };
            if better {
                best[c] = Some((e.rank, margin, l, e.score));
            }
        }
    }
    Ok(ids
        .iter()
        .enumerate()
        .map(|(c, id)| match best[c] {
            Some((rank, margin, l, score)) => DwellChoice {
                container_id: id.to_string(),
                label: TaskId::DWELL[l],
                rank,
                score,
                margin,
                fallback: false,
            },
            None => {
                let mut l = 0;
                for j in 1..8 {
                    if scores[c][j] - thresholds[j] > scores[c][l] - thresholds[l] {
                        l = j;
                    }
                }
                DwellChoice {
                    container_id: id.to_string(),
                    label: TaskId::DWELL[l],
                    rank: full_rank[c][l],
                    score: scores[c][l],
                    margin: scores[c][l] - thresholds[l],
                    fallback: true,
                }
            }
        })
        .collect())
}

/// Rows `as_of,container_id,rank,score`.
pub fn write_service_ranking<W: Write>(out: W, lists: &[(Timestamp, Vec<RankedEntry>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["as_of", "container_id", "rank", "score"])?;
    for (as_of, list) in lists {
        let t = crate::time::format_timestamp(*as_of);
        for e in list {
            w.write_record([t.as_str(), &e.container_id, &e.rank.to_string(), &format!("{:.6}", e.score)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rows `as_of,container_id,label,rank,score,fallback`.
pub fn write_dwell_assignment<W: Write>(out: W, days: &[(Timestamp, Vec<DwellChoice>)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["as_of", "container_id", "label", "rank", "score", "fallback"])?;
    for (as_of, choices) in days {
        let t = crate::time::format_timestamp(*as_of);
        for c in choices {
            w.write_record([
                t.as_str(),
                &c.container_id,
                c.label.as_str(),
                &c.rank.to_string(),
                &format!("{:.6}", c.score),
                if c.fallback { "1" } else { "0" },
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
