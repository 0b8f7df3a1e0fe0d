use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{best_models, dwell_thresholds, load_days, Decisions};
use crate::decision::{rank_topk, write_dwell_assignment, write_service_ranking, ScoreSet};
use crate::evaluation::{
    adjacency_means, assignment_confusion, baseline1_scores, baseline2_flags, hits_at_k, impact_estimate, jaccard_matrix, k_sweep,
    random_baseline, ranked_ids, recall_at_k, weekly_averages, Confusion, ImpactParams,
};
use crate::featfactory::FeatureEngine;
use crate::governance::{ExperimentRecord, GovernanceError, Registry, SelectionMetric};
use crate::labeling::TaskId;
use crate::ontology::OntologyStore;
use crate::time::{format_timestamp, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub metric: SelectionMetric,
    pub k_sweep: Vec<usize>,
    pub random_seed: u64,
    pub impact: Vec<ImpactParams>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            metric: SelectionMetric::PrecisionAtK,
            k_sweep: vec![5, 10, 20, 30, 50, 75, 100],
            random_seed: 7,
            impact: vec![ImpactParams::new(0.25, 0.10), ImpactParams::new(0.40, 0.20)],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub precision: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSummary {
    pub task_id: TaskId,
    pub best_records: Vec<String>,
    pub mean_k: f64,
    /// Mean over splits of the per-split mean over validation days.
    pub model: BaselineSummary,
    /// Same statistic for the best random-forest grid point per split.
    pub forest_precision: Option<f64>,
    pub baselines: BTreeMap<String, BaselineSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyMetric {
    pub task_id: TaskId,
    pub model: String,
    pub split_id: u32,
    pub as_of: String,
    pub k: usize,
    pub precision: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub k: usize,
    pub precision: f64,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactRow {
    pub alpha: f64,
    pub beta: f64,
    pub delta_s: f64,
    pub delta_d: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub experiment_id: String,
    pub tasks: Vec<TaskSummary>,
    #[serde(skip)]
    pub records: Vec<ExperimentRecord>,
    #[serde(skip)]
    pub daily: Vec<DailyMetric>,
    #[serde(skip)]
    pub k_sweep: Vec<SweepRow>,
    pub jaccard: Option<Vec<Vec<f64>>>,
    pub jaccard_adjacent_mean: Option<f64>,
    pub jaccard_nonadjacent_mean: Option<f64>,
    pub confusion: Option<Confusion>,
    pub dwell_fallback_share: Option<f64>,
    pub impact: Vec<ImpactRow>,
    pub leakage_points: usize,
    pub leakage_findings: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Default)]
struct Acc {
    per_split: BTreeMap<u32, (Vec<f64>, Vec<f64>)>,
}

impl Acc {
    fn push(&mut self, split: u32, p: f64, r: Option<f64>) {
        let e = self.per_split.entry(split).or_default();
        e.0.push(p);
        if let Some(r) = r {
            e.1.push(r);
        }
    }

    fn summary(&self) -> BaselineSummary {
        let p: Vec<f64> = self.per_split.values().filter_map(|v| mean(&v.0)).collect();
        let r: Vec<f64> = self.per_split.values().filter_map(|v| mean(&v.1)).collect();
        BaselineSummary {
            precision: mean(&p).unwrap_or(0.0),
            recall: mean(&r),
        }
    }
}

fn metrics_of(set: &ScoreSet, truth: &HashSet<String>, k: usize) -> (f64, Option<f64>) {
    let ranked = rank_topk(set, k).expect("non-empty, k >= 1");
    let ids = ranked_ids(&ranked);
    let p = hits_at_k(&ids, truth, k) as f64 / k.min(ids.len()) as f64;
    (p, recall_at_k(&ids, truth, k).expect("k >= 1"))
}

/// Metrics, baselines and label-overlap analysis for the best model per
/// (task, split).
pub fn evaluate(store: &OntologyStore, registry: &Registry, decisions: &Decisions, settings: &EvalSettings) -> Result<Evaluation, GovernanceError> {
    let records = registry.records()?;
    if records.is_empty() {
        return Err(GovernanceError::NoExperiments("any".into()));
    }
    let best = best_models(&records, settings.metric)?;
    let engine = FeatureEngine::new(store);
    let mut tasks = Vec::new();
    let mut daily = Vec::new();
    let mut sweep_acc: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut dwell_truth: HashMap<String, TaskId> = HashMap::new();

    for (&task, recs) in &best {
        let mut model = Acc::default();
        let mut base: BTreeMap<String, Acc> = BTreeMap::new();
        let mut ks = Vec::new();
        for r in recs {
            ks.push(r.k as f64);
            for day in load_days(registry, r)? {
                let determined: Vec<&(String, f64, Option<bool>)> = day.rows.iter().filter(|x| x.2.is_some()).collect();
                if task != TaskId::Service {
                    for row in day.rows.iter().filter(|x| x.2 == Some(true)) {
                        dwell_truth.insert(format!("{}|{}", format_timestamp(day.as_of), row.0), task);
                    }
                }
                if determined.is_empty() {
                    continue;
                }
                let truth: HashSet<String> = determined.iter().filter(|x| x.2 == Some(true)).map(|x| x.0.clone()).collect();
                let ids: Vec<String> = determined.iter().map(|x| x.0.clone()).collect();
                let idx: Vec<usize> = ids.iter().map(|id| store.index_of(id)).collect::<Result<_, _>>().map_err(|e| GovernanceError::Integrity(e.to_string()))?;
                let mut candidates = vec![(
                    "model".to_string(),
                    ScoreSet::new(day.as_of, task, determined.iter().map(|x| (x.0.clone(), x.1)).collect()),
                )];
                candidates.push(("random".into(), random_baseline(&ids, settings.random_seed, day.as_of, task)));
                if task == TaskId::Service {
                    candidates.push(("baseline1".into(), baseline1_scores(store, &engine, &idx, day.as_of)));
                    candidates.push(("baseline2".into(), baseline2_flags(store, &engine, &idx, day.as_of)));
                }
                for (name, set) in &candidates {
                    let (p, rc) = metrics_of(set, &truth, r.k);
                    if name == "model" {
                        model.push(r.split_id, p, rc);
                    } else {
                        base.entry(name.clone()).or_default().push(r.split_id, p, rc);
                    }
                    daily.push(DailyMetric {
                        task_id: task,
                        model: name.clone(),
                        split_id: r.split_id,
                        as_of: format_timestamp(day.as_of),
                        k: r.k,
                        precision: p,
                        recall: rc,
                    });
                    if task == TaskId::Service {
                        for pt in k_sweep(set, &truth, &settings.k_sweep).expect("non-empty sweep") {
                            let e = sweep_acc.entry((name.clone(), pt.k)).or_default();
                            e.0.push(pt.precision);
                            if let Some(rc) = pt.recall {
                                e.1.push(rc);
                            }
                        }
                    }
                }
            }
        }
        let forest: Vec<f64> = recs
            .iter()
            .filter_map(|b| {
                records
                    .iter()
                    .filter(|r| r.task_id == task && r.split_id == b.split_id && r.algorithm == "random_forest")
                    .filter_map(|r| r.mean_precision)
                    .max_by(f64::total_cmp)
            })
            .collect();
        tasks.push(TaskSummary {
            task_id: task,
            best_records: recs.iter().map(|r| r.record_id.clone()).collect(),
            mean_k: mean(&ks).unwrap_or(0.0),
            model: model.summary(),
            forest_precision: mean(&forest),
            baselines: base.iter().map(|(k, v)| (k.clone(), v.summary())).collect(),
        });
    }

    let k_sweep = sweep_acc
        .into_iter()
        .map(|((model, k), (p, r))| SweepRow {
            model,
            k,
            precision: mean(&p).unwrap_or(0.0),
            recall: mean(&r),
        })
        .collect();

    let (mut jaccard, mut adj, mut nonadj) = (None, None, None);
    if TaskId::DWELL.iter().all(|t| best.contains_key(t)) {
        let mut sets = Vec::new();
        for task in TaskId::DWELL {
            let mut s = BTreeSet::new();
            for (r, th) in best[&task].iter().zip(dwell_thresholds(&best[&task])) {
                for day in load_days(registry, r)? {
                    let t = format_timestamp(day.as_of);
                    s.extend(day.rows.iter().filter(|x| x.1 > th.threshold).map(|x| format!("{t}|{}", x.0)));
                }
            }
            sets.push(s);
        }
        let m = jaccard_matrix(&sets);
        let (a, b) = adjacency_means(&m);
        jaccard = Some(m);
        adj = Some(a);
        nonadj = Some(b);
    }

    let (confusion, fallback) = if decisions.dwell.is_empty() {
        (None, None)
    } else {
        let keyed: Vec<(String, TaskId)> = decisions
            .dwell
            .iter()
            .flat_map(|(t, cs)| {
                let t = format_timestamp(*t);
                cs.iter().map(move |c| (format!("{t}|{}", c.container_id), c.label))
            })
            .collect();
        let total = keyed.len();
        let fb = decisions.dwell.iter().flat_map(|d| &d.1).filter(|c| c.fallback).count();
        (
            Some(assignment_confusion(keyed.iter().map(|(k, l)| (k.as_str(), *l)), &dwell_truth)),
            Some(fb as f64 / total as f64),
        )
    };

    let impact = settings
        .impact
        .iter()
        .map(|p| {
            Ok(ImpactRow {
                alpha: p.alpha,
                beta: p.beta,
                delta_s: p.delta_s,
                delta_d: p.delta_d,
                reduction: impact_estimate(p).map_err(|e| GovernanceError::Integrity(e.to_string()))?,
            })
        })
        .collect::<Result<_, GovernanceError>>()?;

    let leakage = registry.leakage()?;
    Ok(Evaluation {
        experiment_id: registry.experiment_id()?,
        tasks,
        records,
        daily,
        k_sweep,
        jaccard,
        jaccard_adjacent_mean: adj,
        jaccard_nonadjacent_mean: nonadj,
        confusion,
        dwell_fallback_share: fallback,
        impact,
        leakage_points: leakage.len(),
        leakage_findings: leakage.iter().map(|l| l.findings).sum(),
    })
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), GovernanceError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the report bundle into `dir` and returns the bundle manifest
/// (file name → sha256), which is also written as `MANIFEST.json`.
pub fn write_bundle(
    dir: &Path,
    eval: &Evaluation,
    decisions: &Decisions,
    config_digest: &str,
    extra: serde_json::Value,
) -> Result<BTreeMap<String, String>, GovernanceError> {
    std::fs::create_dir_all(dir)?;
    let mut summary = serde_json::to_value(eval)?;
    summary["config_digest"] = config_digest.into();
    summary["run"] = extra;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;

    for task in TaskId::ALL {
        let rows: Vec<&ExperimentRecord> = eval.records.iter().filter(|r| r.task_id == task).collect();
        if rows.is_empty() {
            continue;
        }
        write_rows(
            &dir.join(format!("metrics_{task}.csv")),
            &["record_id", "split_id", "grid_index", "algorithm", "params", "k", "mean_precision", "mean_recall", "mean_auc", "validation_auc", "validation_threshold"],
            rows.iter().map(|r| {
                vec![
                    r.record_id.clone(),
                    r.split_id.to_string(),
                    r.grid_index.to_string(),
                    r.algorithm.clone(),
                    r.params.clone(),
                    r.k.to_string(),
                    opt6(r.mean_precision),
                    opt6(r.mean_recall),
                    opt6(r.mean_auc),
                    opt6(r.validation_auc),
                    opt6(r.validation_threshold),
                ]
            }),
        )?;
    }

    write_rows(
        &dir.join("task_summary.csv"),
        &["task_id", "model", "precision", "recall"],
        eval.tasks.iter().flat_map(|t| {
            let mut rows = vec![vec![t.task_id.to_string(), "model".into(), f6(t.model.precision), opt6(t.model.recall)]];
            if let Some(f) = t.forest_precision {
                rows.push(vec![t.task_id.to_string(), "forest".into(), f6(f), String::new()]);
            }
            for (name, b) in &t.baselines {
                rows.push(vec![t.task_id.to_string(), name.clone(), f6(b.precision), opt6(b.recall)]);
            }
            rows
        }),
    )?;

    write_rows(
        &dir.join("daily_metrics.csv"),
        &["task_id", "model", "split_id", "as_of", "k", "precision", "recall"],
        eval.daily.iter().map(|d| {
            vec![d.task_id.to_string(), d.model.clone(), d.split_id.to_string(), d.as_of.clone(), d.k.to_string(), f6(d.precision), opt6(d.recall)]
        }),
    )?;

    let mut weekly = Vec::new();
    let mut groups: BTreeMap<(TaskId, String), (Vec<(Timestamp, f64)>, Vec<(Timestamp, f64)>)> = BTreeMap::new();
    for d in &eval.daily {
        let t = crate::time::parse_timestamp(&d.as_of).expect("formatted timestamp");
        let g = groups.entry((d.task_id, d.model.clone())).or_default();
        g.0.push((t, d.precision));
        if let Some(r) = d.recall {
            g.1.push((t, r));
        }
    }
    for ((task, model), (p, r)) in &groups {
        let rw: BTreeMap<(i32, u32), f64> = weekly_averages(r).into_iter().map(|w| ((w.iso_year, w.iso_week), w.mean)).collect();
        for w in weekly_averages(p) {
            weekly.push(vec![
                task.to_string(),
                model.clone(),
                w.iso_year.to_string(),
                w.iso_week.to_string(),
                w.days.to_string(),
                f6(w.mean),
                opt6(rw.get(&(w.iso_year, w.iso_week)).copied()),
            ]);
        }
    }
    write_rows(&dir.join("weekly_metrics.csv"), &["task_id", "model", "iso_year", "iso_week", "days", "precision", "recall"], weekly)?;

    write_rows(
        &dir.join("k_sweep.csv"),
        &["model", "k", "precision", "recall"],
        eval.k_sweep.iter().map(|s| vec![s.model.clone(), s.k.to_string(), f6(s.precision), opt6(s.recall)]),
    )?;

    if let Some(m) = &eval.jaccard {
        let mut header = vec!["label".to_string()];
        header.extend(TaskId::DWELL.iter().map(|t| t.to_string()));
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        write_rows(
            &dir.join("jaccard.csv"),
            &h,
            m.iter().zip(TaskId::DWELL).map(|(row, t)| std::iter::once(t.to_string()).chain(row.iter().map(|v| f6(*v))).collect()),
        )?;
    }

    if let Some(c) = &eval.confusion {
        let mut header = vec!["true_label".to_string()];
        header.extend(TaskId::DWELL.iter().map(|t| t.to_string()));
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        let mut rows: Vec<Vec<String>> = c
            .counts
            .iter()
            .zip(TaskId::DWELL)
            .map(|(row, t)| std::iter::once(t.to_string()).chain(row.iter().map(|v| v.to_string())).collect())
            .collect();
        let mut missing = vec!["missing_truth".to_string(), c.missing_truth.to_string()];
        missing.resize(9, String::new());
        rows.push(missing);
        write_rows(&dir.join("assignment_confusion.csv"), &h, rows)?;
    }

    write_rows(
        &dir.join("impact.csv"),
        &["alpha", "beta", "delta_s", "delta_d", "reduction"],
        eval.impact.iter().map(|r| vec![f6(r.alpha), f6(r.beta), f6(r.delta_s), f6(r.delta_d), f6(r.reduction)]),
    )?;

    write_rows(
        &dir.join("thresholds.csv"),
        &["split_id", "task_id", "threshold", "source"],
        decisions
            .thresholds
            .iter()
            .map(|t| vec![t.split_id.to_string(), t.task_id.to_string(), f6(t.threshold), t.source.to_string()]),
    )?;
    write_service_ranking(std::fs::File::create(dir.join("service_ranking.csv"))?, &decisions.service)?;
    write_dwell_assignment(std::fs::File::create(dir.join("dwell_assignment.csv"))?, &decisions.dwell)?;

    let mut manifest = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        if name != "MANIFEST.json" && p.is_file() {
            manifest.insert(name, hex::encode(Sha256::digest(std::fs::read(&p)?)));
        }
    }
    let doc = serde_json::json!({ "config_digest": config_digest, "files": manifest });
    std::fs::write(dir.join("MANIFEST.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(manifest)
}
