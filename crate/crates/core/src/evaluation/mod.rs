//! Ranking metrics, operational baselines, label-overlap analysis and the
//! handling-reduction estimate.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::Datelike;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::{RankedEntry, ScoreSet};
use crate::featfactory::{EntityKey, FeatureEngine};
use crate::labeling::TaskId;
use crate::ontology::OntologyStore;
use crate::time::{epoch_seconds, Timestamp};

/// Trailing window of the consignee baselines.
pub const BASELINE_WINDOW_DAYS: u32 = 182;
/// Baseline 2 flags consignees serviced strictly more often than this.
pub const BASELINE2_CUTOFF: f64 = 0.85;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("empty ranked list")]
    EmptyRanking,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("impact parameter `{0}` outside [0, 1]")]
    ImpactRange(&'static str),
    #[error("k sweep needs at least one k")]
    EmptySweep,
}

/// `|top-k ∩ truth|` where the list is already in rank order.
pub fn hits_at_k<S: AsRef<str>>(ranked: &[S], truth: &HashSet<String>, k: usize) -> usize {
    ranked.iter().take(k).filter(|id| truth.contains(id.as_ref())).count()
}

/// `|top-k ∩ truth| / min(k, n)`.
pub fn precision_at_k<S: AsRef<str>>(ranked: &[S], truth: &HashSet<String>, k: usize) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if ranked.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    Ok(hits_at_k(ranked, truth, k) as f64 / k.min(ranked.len()) as f64)
}

/// `|top-k ∩ truth| / |truth|`; `None` when there is nothing to recall.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], truth: &HashSet<String>, k: usize) -> Result<Option<f64>, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if truth.is_empty() {
        return Ok(None);
    }
    Ok(Some(hits_at_k(ranked, truth, k) as f64 / truth.len() as f64))
}

pub fn ranked_ids(r: &[RankedEntry]) -> Vec<&str> {
    r.iter().map(|e| e.container_id.as_str()).collect()
}

fn consignee_rate(engine: &FeatureEngine, consignee: Option<u32>, as_of: i64) -> Option<f64> {
    let (n, served) = engine.service_counts(EntityKey::Consignee, consignee?, BASELINE_WINDOW_DAYS, as_of);
    (n > 0).then(|| served as f64 / n as f64)
}

/// Consignee service rate over the trailing window; cold starts score 0.
pub fn baseline1_scores(store: &OntologyStore, engine: &FeatureEngine, cohort: &[usize], as_of: Timestamp) -> ScoreSet {
    let t = epoch_seconds(as_of);
    ScoreSet::new(
        as_of,
        TaskId::Service,
        cohort
            .iter()
            .map(|&i| {
                let e = store.entity(i);
                (e.id().to_string(), consignee_rate(engine, e.consignee_id, t).unwrap_or(0.0))
            })
            .collect(),
    )
}

/// 1 for consignees serviced more than 85% of the time in the window.
pub fn baseline2_flags(store: &OntologyStore, engine: &FeatureEngine, cohort: &[usize], as_of: Timestamp) -> ScoreSet {
    let t = epoch_seconds(as_of);
    ScoreSet::new(
        as_of,
        TaskId::Service,
        cohort
            .iter()
            .map(|&i| {
                let e = store.entity(i);
                let flag = consignee_rate(engine, e.consignee_id, t).is_some_and(|r| r > BASELINE2_CUTOFF);
                (e.id().to_string(), if flag { 1.0 } else { 0.0 })
            })
            .collect(),
    )
}

/// Uniform score per container, keyed by `(seed, id)` so cohort order is irrelevant.
pub fn random_score(seed: u64, container_id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(container_id.as_bytes());
    let d = h.finalize();
    let v = u64::from_le_bytes(d[..8].try_into().unwrap());
    (v >> 11) as f64 / (1u64 << 53) as f64
}

pub fn random_baseline(cohort_ids: &[String], seed: u64, as_of: Timestamp, task: TaskId) -> ScoreSet {
    ScoreSet::new(
        as_of,
        task,
        cohort_ids.iter().map(|id| (id.clone(), random_score(seed, id))).collect(),
    )
}

/// `|Si ∩ Sj| / |Si ∪ Sj|`, with two empty sets counting as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn jaccard_matrix(sets: &[BTreeSet<String>]) -> Vec<Vec<f64>> {
    let n = sets.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = jaccard(&sets[i], &sets[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Mean off-diagonal similarity of neighbouring labels and of the rest.
pub fn adjacency_means(m: &[Vec<f64>]) -> (f64, f64) {
    let (mut adj, mut na, mut rest, mut nr) = (0.0, 0, 0.0, 0);
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            if j == i + 1 {
                adj += m[i][j];
                na += 1;
            } else {
                rest += m[i][j];
                nr += 1;
            }
        }
    }
    (adj / na.max(1) as f64, rest / nr.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    /// Share of moves that are unproductive.
    pub alpha: f64,
    /// Share of unproductive moves attributable to service.
    pub beta: f64,
    pub delta_s: f64,
    pub delta_d: f64,
}

impl ImpactParams {
    pub fn new(delta_s: f64, delta_d: f64) -> Self {
        Self {
            alpha: 0.75,
            beta: 0.51,
            delta_s,
            delta_d,
        }
    }
}

/// `α·β·δs + α·(1−β)·δd`.
pub fn impact_estimate(p: &ImpactParams) -> Result<f64, EvalError> {
    for (name, v) in [("alpha", p.alpha), ("beta", p.beta), ("delta_s", p.delta_s), ("delta_d", p.delta_d)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(EvalError::ImpactRange(name));
        }
    }
    Ok(p.alpha * p.beta * p.delta_s + p.alpha * (1.0 - p.beta) * p.delta_d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KPoint {
    pub k: usize,
    pub hits: usize,
    pub precision: f64,
    pub recall: Option<f64>,
}

pub fn k_sweep(scores: &ScoreSet, truth: &HashSet<String>, ks: &[usize]) -> Result<Vec<KPoint>, EvalError> {
    if ks.is_empty() {
        return Err(EvalError::EmptySweep);
    }
    let max_k = *ks.iter().max().unwrap();
    let ranked = crate::decision::rank_topk(scores, max_k.max(1)).map_err(|_| EvalError::EmptyRanking)?;
    let ids = ranked_ids(&ranked);
    ks.iter()
        .map(|&k| {
            Ok(KPoint {
                k,
                hits: hits_at_k(&ids, truth, k),
                precision: precision_at_k(&ids, truth, k)?,
                recall: recall_at_k(&ids, truth, k)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confusion {
    /// `counts[true][assigned]`, dt1..dt8.
    pub counts: [[u64; 8]; 8],
    pub missing_truth: usize,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct share of each assigned label; `None` for unused columns.
    pub fn column_precision(&self) -> [Option<f64>; 8] {
        std::array::from_fn(|c| {
            let col: u64 = (0..8).map(|r| self.counts[r][c]).sum();
            (col > 0).then(|| self.counts[c][c] as f64 / col as f64)
        })
    }
}

fn dwell_index(t: TaskId) -> Option<usize> {
    t.dwell_category().map(|m| m as usize - 1)
}

pub fn assignment_confusion<'a>(
    assigned: impl IntoIterator<Item = (&'a str, TaskId)>,
    truth: &HashMap<String, TaskId>,
) -> Confusion {
    let mut c = Confusion {
        counts: [[0; 8]; 8],
        missing_truth: 0,
    };
    for (id, label) in assigned {
        match (truth.get(id).and_then(|t| dwell_index(*t)), dwell_index(label)) {
            (Some(r), Some(col)) => c.counts[r][col] += 1,
            _ => c.missing_truth += 1,
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyMean {
    pub iso_year: i32,
    pub iso_week: u32,
    pub days: usize,
    pub mean: f64,
}

/// Mean of daily values grouped by ISO week, in calendar order.
pub fn weekly_averages(daily: &[(Timestamp, f64)]) -> Vec<WeeklyMean> {
    let mut groups: BTreeMap<(i32, u32), (usize, f64)> = BTreeMap::new();
    for (t, v) in daily {
        let w = t.date().iso_week();
        let g = groups.entry((w.year(), w.week())).or_default();
        g.0 += 1;
        g.1 += v;
    }
    groups
        .into_iter()
        .map(|((iso_year, iso_week), (days, sum))| WeeklyMean {
            iso_year,
            iso_week,
            days,
            mean: sum / days as f64,
        })
        .collect()
}

/// Daily list size for a task: a fixed share of the mean daily cohort for
/// service, the label's base rate times the cohort for dwell labels.
pub fn task_k(task: TaskId, mean_daily_cohort: f64, base_rate: f64, service_fraction: f64) -> usize {
    let share = match task {
        TaskId::Service => service_fraction,
        _ => base_rate,
    };
    ((mean_daily_cohort * share).round() as usize).max(1)
}
