//! The (task, split, grid point) loop.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::registry::{ExperimentRecord, LeakageRow, MetricRow, Registry, ScoreRow};
use super::{desk_grid, generate_splits, GovernanceError, TemporalConfig, TimeSplit};
use crate::decision::{rank_topk, ScoreSet};
use crate::evaluation::{hits_at_k, precision_at_k, ranked_ids, recall_at_k, task_k};
use crate::featfactory::{compute_rows, default_specs, leakage_audit, FeatureEngine, FeatureMatrix, FeatureSpec, DEFAULT_WINDOWS};
use crate::labeling::{task_label, Label, TaskId};
use crate::learners::{roc_curve, train, Dataset, HyperParams};
use crate::ontology::OntologyStore;
use crate::time::{format_timestamp, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub temporal: TemporalConfig,
    pub tasks: Vec<TaskId>,
    pub grid: Vec<HyperParams>,
    pub feature_specs: Vec<FeatureSpec>,
    /// Training prediction points are taken every this many days.
    pub train_stride_days: u32,
    /// Service list size as a share of the mean daily cohort.
    pub service_k_fraction: f64,
    /// Use only the first splits (for quick runs).
    pub max_splits: Option<usize>,
    /// Digest of the enclosing run configuration, stamped into records.
    pub config_digest: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            temporal: TemporalConfig::default(),
            tasks: TaskId::ALL.to_vec(),
            grid: desk_grid(7),
            feature_specs: default_specs(&DEFAULT_WINDOWS),
            train_stride_days: 1,
            service_k_fraction: 0.17,
            max_splits: None,
            config_digest: String::new(),
        }
    }
}

impl ExperimentConfig {
    /// Stable id derived from every field.
    pub fn experiment_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }

    pub fn splits(&self) -> Result<Vec<TimeSplit>, GovernanceError> {
        let mut s = generate_splits(&self.temporal)?;
        if let Some(n) = self.max_splits {
            s.truncate(n.max(1));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub experiment_id: String,
    pub executed: usize,
    pub skipped: usize,
    /// False when stopped early by `max_triples`.
    pub complete: bool,
    pub leakage_findings: usize,
    pub leakage_points: usize,
}

struct Point {
    idx: Vec<usize>,
    matrix: FeatureMatrix,
}

fn record_id(task: TaskId, split: u32, grid: usize) -> String {
    format!("{task}-s{split:03}-g{grid:02}")
}

fn build_points(
    store: &OntologyStore,
    engine: &FeatureEngine,
    specs: &[FeatureSpec],
    points: &[Timestamp],
    cache: &mut HashMap<Timestamp, Point>,
) -> Result<(), GovernanceError> {
    let missing: Vec<Timestamp> = points.iter().copied().filter(|p| !cache.contains_key(p)).collect();
    let built: Vec<(Timestamp, Point)> = missing
        .par_iter()
        .map(|&t| {
            let idx = store.cohort(t);
            let ids: Vec<String> = idx.iter().map(|&i| store.entity(i).id().to_string()).collect();
            let matrix = compute_rows(engine, store, &ids, t, specs)?;
            Ok((t, Point { idx, matrix }))
        })
        .collect::<Result<_, GovernanceError>>()?;
    cache.extend(built);
    Ok(())
}

fn option_finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = v.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Runs every pending (task, split, grid point) triple and commits each to
/// the registry. Triples already in the registry are skipped, so an
/// interrupted run resumes where it stopped. `max_triples` caps the number
/// executed by this call.
pub fn run_experiment(
    store: &OntologyStore,
    cfg: &ExperimentConfig,
    registry_dir: &std::path::Path,
    max_triples: Option<usize>,
) -> Result<RunOutcome, GovernanceError> {
    if cfg.grid.is_empty() {
        return Err(GovernanceError::EmptyGrid);
    }
    if cfg.tasks.is_empty() {
        return Err(GovernanceError::NoTasks);
    }
    let splits = cfg.splits()?;
    let experiment_id = cfg.experiment_id();
    let registry = Registry::open(registry_dir, &experiment_id, &cfg.config_digest)?;
    let done = registry.completed()?;
    let audited: HashSet<u32> = registry.leakage()?.iter().map(|r| r.split_id).collect();
    let engine = FeatureEngine::new(store);
    let mut cache: HashMap<Timestamp, Point> = HashMap::new();
    let mut out = RunOutcome {
        experiment_id: experiment_id.clone(),
        executed: 0,
        skipped: 0,
        complete: true,
        leakage_findings: 0,
        leakage_points: 0,
    };

    for split in &splits {
        let pending: Vec<(TaskId, usize)> = cfg
            .tasks
            .iter()
            .flat_map(|&t| (0..cfg.grid.len()).map(move |g| (t, g)))
            .filter(|(t, g)| !done.contains(&record_id(*t, split.split_id, *g)))
            .collect();
        out.skipped += cfg.tasks.len() * cfg.grid.len() - pending.len();
        if pending.is_empty() {
            continue;
        }
        if max_triples.is_some_and(|m| out.executed >= m) {
            out.complete = false;
            break;
        }
        // Training labels only see what was known by the validation start.
        let label_store = store.censored(split.validate_start);
        let train_points = split.train_points(cfg.train_stride_days);
        let val_points = split.validation_points();
        let mut needed = train_points.clone();
        needed.extend(&val_points);
        build_points(store, &engine, &cfg.feature_specs, &needed, &mut cache)?;
        cache.retain(|t, _| *t >= split.train_start);
        let daily = split.train_points(1);
        let mean_daily = daily.iter().map(|&t| store.cohort(t).len()).sum::<usize>() as f64 / daily.len().max(1) as f64;

        if !audited.contains(&split.split_id) {
            let mut sample: Vec<Timestamp> = [train_points.first(), train_points.last(), val_points.first()]
                .into_iter()
                .flatten()
                .copied()
                .collect();
            sample.dedup();
            for t in sample {
                let report = leakage_audit(&cache[&t].matrix, store)?;
                out.leakage_points += 1;
                out.leakage_findings += report.findings.len();
                registry.append_leakage(&LeakageRow {
                    split_id: split.split_id,
                    as_of: format_timestamp(t),
                    cells_checked: report.cells_checked,
                    findings: report.findings.len(),
                })?;
            }
        }

        for &task in &cfg.tasks {
            let grid_idx: Vec<usize> = pending.iter().filter(|(t, _)| *t == task).map(|p| p.1).collect();
            if grid_idx.is_empty() {
                continue;
            }
            let data = training_set(&label_store, &cache, &train_points, split, task)?;
            let positives = data.y.iter().filter(|&&b| b).count();
            let base_rate = positives as f64 / data.n_rows() as f64;
            let k = task_k(task, mean_daily, base_rate, cfg.service_k_fraction);
            let truth: Vec<Vec<Label>> = val_points
                .iter()
                .map(|t| cache[t].idx.iter().map(|&i| task_label(store, i, task, *t)).collect())
                .collect();
            for g in grid_idx {
                if max_triples.is_some_and(|m| out.executed >= m) {
                    out.complete = false;
                    return Ok(out);
                }
                let rid = record_id(task, split.split_id, g);
                let params = &cfg.grid[g];
                let mut model = train(&data, params)?;
                model.split_id = Some(split.split_id);
                let train_scores = model.predict_rows(&data.x)?;
                let train_threshold = roc_curve(&train_scores, &data.y).ok().map(|r| r.youden().threshold);

                let mut scores = Vec::new();
                let mut metrics = Vec::new();
                let (mut pooled_s, mut pooled_y) = (Vec::new(), Vec::new());
                for (pi, &t) in val_points.iter().enumerate() {
                    let point = &cache[&t];
                    let s = if point.idx.is_empty() { Vec::new() } else { model.predict(&point.matrix)? };
                    let as_of = format_timestamp(t);
                    let mut determined = Vec::new();
                    let mut truth_set = HashSet::new();
                    let mut point_y = Vec::new();
                    for (r, id) in point.matrix.container_ids.iter().enumerate() {
                        let label = truth[pi][r];
                        scores.push(ScoreRow {
                            as_of: as_of.clone(),
                            container_id: id.clone(),
                            score: s[r],
                            label: label.as_str().to_string(),
                        });
                        if let Some(y) = label.as_bool() {
                            determined.push((id.clone(), s[r]));
                            point_y.push(y);
                            pooled_s.push(s[r]);
                            pooled_y.push(y);
                            if y {
                                truth_set.insert(id.clone());
                            }
                        }
                    }
                    let mut row = MetricRow {
                        record_id: rid.clone(),
                        as_of,
                        k,
                        evaluated: determined.len(),
                        positives: truth_set.len(),
                        hits: 0,
                        precision: None,
                        recall: None,
                        auc: None,
                    };
                    if !determined.is_empty() {
                        let point_scores: Vec<f64> = determined.iter().map(|d| d.1).collect();
                        row.auc = roc_curve(&point_scores, &point_y).ok().map(|r| r.auc());
                        let ranked = rank_topk(&ScoreSet::new(t, task, determined), k).expect("non-empty, k >= 1");
                        let ids = ranked_ids(&ranked);
                        row.hits = hits_at_k(&ids, &truth_set, k);
                        row.precision = precision_at_k(&ids, &truth_set, k).ok();
                        row.recall = recall_at_k(&ids, &truth_set, k).ok().flatten();
                    }
                    metrics.push(row);
                }
                let val_roc = roc_curve(&pooled_s, &pooled_y).ok();
                let record = ExperimentRecord {
                    record_id: rid.clone(),
                    experiment_id: experiment_id.clone(),
                    config_digest: cfg.config_digest.clone(),
                    task_id: task,
                    split_id: split.split_id,
                    grid_index: g as u32,
                    algorithm: params.algorithm.as_str().to_string(),
                    params: serde_json::to_string(params)?,
                    train_start: format_timestamp(split.train_start),
                    validate_start: format_timestamp(split.validate_start),
                    validate_end: format_timestamp(split.validate_end),
                    train_rows: data.n_rows(),
                    train_positives: positives,
                    k,
                    train_threshold,
                    validation_threshold: val_roc.as_ref().map(|r| r.youden().threshold),
                    validation_auc: val_roc.as_ref().map(|r| r.auc()).and_then(option_finite),
                    mean_precision: mean(metrics.iter().filter_map(|m| m.precision)),
                    mean_recall: mean(metrics.iter().filter_map(|m| m.recall)),
                    mean_auc: mean(metrics.iter().filter_map(|m| m.auc)),
                    model_path: format!("models/{rid}.json"),
                    scores_path: format!("scores/{rid}.csv"),
                    metrics_path: format!("metrics/{rid}.csv"),
                };
                registry.commit(&record, &model, &scores, &metrics)?;
                log::info!("{rid}: {} mean precision {:?}", params.describe(), record.mean_precision);
                out.executed += 1;
            }
        }
    }
    registry.verify()?;
    Ok(out)
}

/// Rows from training prediction points whose label window closes by the
/// validation start; undetermined labels are dropped.
fn training_set(
    label_store: &OntologyStore,
    cache: &HashMap<Timestamp, Point>,
    points: &[Timestamp],
    split: &TimeSplit,
    task: TaskId,
) -> Result<Dataset, GovernanceError> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n_cols = 0;
    let mut schema = String::new();
    for &t in points.iter().filter(|&&t| t + task.maturity() <= split.validate_start) {
        let p = &cache[&t];
        n_cols = p.matrix.n_cols();
        schema.clone_from(&p.matrix.schema_hash);
        for (r, &i) in p.idx.iter().enumerate() {
            if let Some(label) = task_label(label_store, i, task, t).as_bool() {
                x.extend_from_slice(p.matrix.row(r));
                y.push(label);
            }
        }
    }
    if y.is_empty() {
        return Err(GovernanceError::EmptyTraining {
            task: task.to_string(),
            split: split.split_id,
        });
    }
    Ok(Dataset::new(x, n_cols, y, schema)?)
}
