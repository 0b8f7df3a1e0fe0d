//! One function per pipeline stage. Each reads only the artifacts listed in
//! its doc comment and writes only under its own directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{ConfigError, RunConfig};
use crate::decision::{write_dwell_assignment, write_service_ranking};
use crate::featfactory::{compute_rows, leakage_audit, FeatureEngine};
use crate::governance::{run_experiment, Registry};
use crate::hsclass::{build_index, HsCatalog};
use crate::labeling::{build_labels, write_labels};
use crate::ontology::{build_ontology, clean, ingest_raw, CleanOptions, OntologyStore};
use crate::pipeline::{classify_store, link_store};
use crate::synthworld::generate_world;
use crate::time::{format_timestamp, midnight, Timestamp};
use crate::workflow::{assign, evaluate, write_bundle};

pub const STAGES: [&str; 10] = [
    "generate",
    "ingest",
    "link",
    "classify",
    "features",
    "labels",
    "run-experiment",
    "assign",
    "evaluate",
    "report",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing upstream artifact {}; run `{stage}` first", .path.display())]
    Missing { path: PathBuf, stage: &'static str },
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Missing { .. } => 4,
            CliError::Stage { .. } => 5,
        }
    }
}

fn fail<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Artifact directories under the output root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn raw(&self) -> PathBuf {
        self.root.join("raw")
    }
    pub fn store(&self) -> PathBuf {
        self.root.join("store")
    }
    pub fn linkage(&self) -> PathBuf {
        self.root.join("linkage")
    }
    pub fn linked_store(&self) -> PathBuf {
        self.linkage().join("store")
    }
    pub fn hsclass(&self) -> PathBuf {
        self.root.join("hsclass")
    }
    pub fn classified_store(&self) -> PathBuf {
        self.hsclass().join("store")
    }
    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }
    pub fn labels(&self) -> PathBuf {
        self.root.join("labels")
    }
    pub fn registry(&self) -> PathBuf {
        self.root.join("registry")
    }
    pub fn decisions(&self) -> PathBuf {
        self.root.join("decisions")
    }
    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Missing { path, stage })
    }
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes `stage.json` in `dir`: stage name, config digest and a sha256 per
/// regular file directly inside `dir`.
fn stamp(dir: &Path, stage: &'static str, digest: &str, extra: serde_json::Value) -> Result<(), CliError> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(fail(stage))? {
        let entry = entry.map_err(fail(stage))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "stage.json" || !entry.file_type().map_err(fail(stage))?.is_file() {
            continue;
        }
        files.insert(name, sha256_file(&entry.path()).map_err(fail(stage))?);
    }
    let doc = json!({
        "stage": stage,
        "config_digest": digest,
        "details": extra,
        "files": files,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(fail(stage))? + "\n";
    fs::write(dir.join("stage.json"), text).map_err(fail(stage))
}

fn horizon(cfg: &RunConfig) -> Timestamp {
    midnight(cfg.temporal.data_end)
}

fn load_store(path: PathBuf, upstream: &'static str, stage: &'static str) -> Result<OntologyStore, CliError> {
    let dir = require(path, upstream)?;
    require(dir.join("manifest.json"), upstream)?;
    OntologyStore::load(&dir).map_err(fail(stage))
}

/// Writes `raw/` from the `[world]` section.
pub fn generate(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let world = cfg
        .world
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("`generate` needs a [world] section".into()))?;
    let tables = generate_world(world).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let dir = out.raw();
    tables.write(&dir).map_err(fail("generate"))?;
    log::info!("generated {} containers, {} events", tables.containers.len(), tables.events.len());
    stamp(&dir, "generate", &cfg.digest(), json!({ "containers": tables.containers.len(), "events": tables.events.len() }))
}

/// Reads the source extracts (`paths.containers`/`paths.events`, else `raw/`)
/// and writes the cleaned store to `store/`.
pub fn ingest(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let (cpath, epath) = match (&cfg.paths.containers, &cfg.paths.events) {
        (Some(c), Some(e)) => (require(c.clone(), "ingest")?, require(e.clone(), "ingest")?),
        _ => (
            require(out.raw().join("containers.csv"), "generate")?,
            require(out.raw().join("events.csv"), "generate")?,
        ),
    };
    let raw = ingest_raw(&cpath, &epath).map_err(fail("ingest"))?;
    let cleaned = clean(&raw, CleanOptions::default()).map_err(fail("ingest"))?;
    let rejected: Vec<(String, String)> = cleaned
        .rejected_containers
        .iter()
        .map(|q| (q.row.container_id.clone(), q.reason.clone()))
        .collect();
    let store = build_ontology(cleaned).with_horizon(horizon(cfg));
    let dir = out.store();
    store.save(&dir).map_err(fail("ingest"))?;
    let mut w = csv::Writer::from_path(dir.join("quarantine_containers.csv")).map_err(fail("ingest"))?;
    w.write_record(["container_id", "reason"]).map_err(fail("ingest"))?;
    for (id, reason) in &rejected {
        w.write_record([id, reason]).map_err(fail("ingest"))?;
    }
    w.flush().map_err(fail("ingest"))?;
    let (nc, ne) = raw.row_counts();
    log::info!("ingested {} containers ({} quarantined), {} events", store.len(), rejected.len(), store.event_count());
    stamp(
        &dir,
        "ingest",
        &cfg.digest(),
        json!({
            "raw_containers": nc,
            "raw_events": ne,
            "entities": store.len(),
            "quarantined_containers": rejected.len(),
            "quarantined_events": store.quarantined_events().len(),
        }),
    )
}

/// Reads `store/`, resolves consignees, writes `linkage/`.
pub fn link(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let mut store = load_store(out.store(), "ingest", "link")?;
    let resolution = link_store(&mut store, cfg.linkage.threshold);
    let dir = out.linkage();
    store.save(&out.linked_store()).map_err(fail("link"))?;
    resolution.write_csv(&dir.join("consignees.csv")).map_err(fail("link"))?;
    log::info!("{} consignee names resolved to {} entities", resolution.names.len(), resolution.component_count());
    stamp(&out.linked_store(), "link", &cfg.digest(), json!({}))?;
    stamp(
        &dir,
        "link",
        &cfg.digest(),
        json!({ "names": resolution.names.len(), "entities": resolution.component_count() }),
    )
}

/// Reads `linkage/store/`, assigns HS chapters, writes `hsclass/`.
pub fn classify(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let mut store = load_store(out.linked_store(), "link", "classify")?;
    let index = build_index(&HsCatalog::bundled()).map_err(fail("classify"))?;
    let coverage = classify_store(&mut store, &index, cfg.hsclass.floor);
    let dir = out.hsclass();
    store.save(&out.classified_store()).map_err(fail("classify"))?;
    let text = serde_json::to_string_pretty(&json!({
        "coverage": coverage,
        "coverage_fraction": coverage.coverage(),
        "explicit_fraction": coverage.explicit_fraction(),
        "tfidf_fraction": coverage.tfidf_fraction(),
    }))
    .map_err(fail("classify"))?;
    fs::write(dir.join("coverage.json"), text + "\n").map_err(fail("classify"))?;
    log::info!("HS coverage {:.1}%", 100.0 * coverage.coverage());
    stamp(&out.classified_store(), "classify", &cfg.digest(), json!({}))?;
    stamp(&dir, "classify", &cfg.digest(), json!({}))
}

/// Prediction points for the `features` and `labels` stages: the given dates,
/// else the first validation day of every configured split.
fn snapshot_points(cfg: &RunConfig, dates: &[NaiveDate]) -> Result<Vec<Timestamp>, CliError> {
    if !dates.is_empty() {
        return Ok(dates.iter().map(|&d| midnight(d)).collect());
    }
    let splits = cfg
        .experiment_config()
        .splits()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(splits.iter().map(|s| s.validate_start).collect())
}

fn stem(t: Timestamp) -> String {
    t.format("%Y-%m-%d").to_string()
}

/// Reads `hsclass/store/`, writes one feature matrix per prediction point and
/// a leakage audit to `features/`.
pub fn features(cfg: &RunConfig, out: &Layout, dates: &[NaiveDate]) -> Result<(), CliError> {
    let store = load_store(out.classified_store(), "classify", "features")?;
    let specs = cfg.experiment_config().feature_specs;
    let dir = out.features();
    fs::create_dir_all(&dir).map_err(fail("features"))?;
    let engine = FeatureEngine::new(&store);
    let mut audit = csv::Writer::from_path(dir.join("leakage.csv")).map_err(fail("features"))?;
    audit
        .write_record(["as_of", "rows", "cells_checked", "findings"])
        .map_err(fail("features"))?;
    let mut total = 0;
    for t in snapshot_points(cfg, dates)? {
        let ids: Vec<String> = store.cohort(t).iter().map(|&i| store.entity(i).id().to_string()).collect();
        let m = compute_rows(&engine, &store, &ids, t, &specs).map_err(fail("features"))?;
        m.write(&dir.join(format!("features_{}.csv", stem(t)))).map_err(fail("features"))?;
        let report = leakage_audit(&m, &store).map_err(fail("features"))?;
        total += report.findings.len();
        audit
            .write_record([
                format_timestamp(t),
                m.n_rows().to_string(),
                report.cells_checked.to_string(),
                report.findings.len().to_string(),
            ])
            .map_err(fail("features"))?;
    }
    audit.flush().map_err(fail("features"))?;
    if total > 0 {
        return Err(CliError::Stage {
            stage: "features",
            message: format!("leakage audit reported {total} finding(s); see {}", dir.join("leakage.csv").display()),
        });
    }
    stamp(&dir, "features", &cfg.digest(), json!({}))
}

/// Reads `hsclass/store/`, writes one label table per prediction point to `labels/`.
pub fn labels(cfg: &RunConfig, out: &Layout, dates: &[NaiveDate]) -> Result<(), CliError> {
    let store = load_store(out.classified_store(), "classify", "labels")?;
    let dir = out.labels();
    fs::create_dir_all(&dir).map_err(fail("labels"))?;
    for t in snapshot_points(cfg, dates)? {
        let ids: Vec<String> = store.cohort(t).iter().map(|&i| store.entity(i).id().to_string()).collect();
        let vectors = build_labels(&store, &ids, t, &cfg.experiment.tasks).map_err(fail("labels"))?;
        let f = fs::File::create(dir.join(format!("labels_{}.csv", stem(t)))).map_err(fail("labels"))?;
        write_labels(BufWriter::new(f), &vectors).map_err(fail("labels"))?;
    }
    stamp(&dir, "labels", &cfg.digest(), json!({}))
}

/// Reads `hsclass/store/`, trains and validates every grid point, writes `registry/`.
pub fn run_experiments(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let store = load_store(out.classified_store(), "classify", "run-experiment")?;
    let xcfg = cfg.experiment_config();
    let outcome = run_experiment(&store, &xcfg, &out.registry(), None).map_err(fail("run-experiment"))?;
    log::info!(
        "experiment {}: {} executed, {} resumed, {} leakage finding(s)",
        outcome.experiment_id,
        outcome.executed,
        outcome.skipped,
        outcome.leakage_findings
    );
    if outcome.leakage_findings > 0 {
        return Err(CliError::Stage {
            stage: "run-experiment",
            message: format!("leakage audit reported {} finding(s)", outcome.leakage_findings),
        });
    }
    Ok(())
}

fn open_registry(out: &Layout, stage: &'static str) -> Result<Registry, CliError> {
    require(out.registry().join("experiments.csv"), "run-experiment")?;
    Registry::open_existing(&out.registry()).map_err(fail(stage))
}

/// Reads `registry/`, writes the service ranking and dwell assignment to `decisions/`.
pub fn assign_stage(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let registry = open_registry(out, "assign")?;
    let d = assign(&registry, cfg.evaluation.metric).map_err(fail("assign"))?;
    let dir = out.decisions();
    fs::create_dir_all(&dir).map_err(fail("assign"))?;
    let f = fs::File::create(dir.join("service_ranking.csv")).map_err(fail("assign"))?;
    write_service_ranking(BufWriter::new(f), &d.service).map_err(fail("assign"))?;
    let f = fs::File::create(dir.join("dwell_assignment.csv")).map_err(fail("assign"))?;
    write_dwell_assignment(BufWriter::new(f), &d.dwell).map_err(fail("assign"))?;
    let mut w = csv::Writer::from_path(dir.join("thresholds.csv")).map_err(fail("assign"))?;
    w.write_record(["split_id", "task_id", "threshold", "source"]).map_err(fail("assign"))?;
    for t in &d.thresholds {
        w.write_record([t.split_id.to_string(), t.task_id.to_string(), format!("{:.6}", t.threshold), t.source.to_string()])
            .map_err(fail("assign"))?;
    }
    w.flush().map_err(fail("assign"))?;
    stamp(&dir, "assign", &cfg.digest(), json!({ "service_days": d.service.len(), "dwell_days": d.dwell.len() }))
}

/// Reads `hsclass/store/` and `registry/`, writes the metrics bundle to `evaluation/`.
pub fn evaluate_stage(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let registry = open_registry(out, "evaluate")?;
    let store = load_store(out.classified_store(), "classify", "evaluate")?;
    let settings = cfg.eval_settings();
    let d = assign(&registry, settings.metric).map_err(fail("evaluate"))?;
    let eval = evaluate(&store, &registry, &d, &settings).map_err(fail("evaluate"))?;
    let extra = json!({ "settings": settings, "experiment": registry.experiment_id().map_err(fail("evaluate"))? });
    write_bundle(&out.evaluation(), &eval, &d, &cfg.digest(), extra).map_err(fail("evaluate"))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.3}"))
}

/// Reads `evaluation/`, writes `report/` (REPORT.md plus the bundle files and
/// a manifest of their digests).
pub fn report(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    let src = out.evaluation();
    let summary_path = require(src.join("summary.json"), "evaluate")?;
    require(src.join("MANIFEST.json"), "evaluate")?;
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&summary_path).map_err(fail("report"))?).map_err(fail("report"))?;
    let dir = out.report();
    fs::create_dir_all(&dir).map_err(fail("report"))?;

    let mut names: Vec<String> = fs::read_dir(&src)
        .map_err(fail("report"))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != "MANIFEST.json")
        .collect();
    names.sort();
    for n in &names {
        fs::copy(src.join(n), dir.join(n)).map_err(fail("report"))?;
    }

    let mut md = String::new();
    let _ = writeln!(md, "# Run report\n");
    let _ = writeln!(md, "- config digest: `{}`", cfg.digest());
    let _ = writeln!(md, "- experiment: `{}`", summary["experiment_id"].as_str().unwrap_or(""));
    let _ = writeln!(
        md,
        "- leakage: {} finding(s) over {} audited point(s)\n",
        summary["leakage_findings"], summary["leakage_points"]
    );
    let _ = writeln!(md, "## Mean precision@k over validation splits\n");
    let _ = writeln!(md, "| task | k | model | forest | random | baseline1 | baseline2 |");
    let _ = writeln!(md, "|---|---|---|---|---|---|---|");
    for t in summary["tasks"].as_array().into_iter().flatten() {
        let b = |name: &str| fmt_opt(t["baselines"][name]["precision"].as_f64());
        let _ = writeln!(
            md,
            "| {} | {:.1} | {} | {} | {} | {} | {} |",
            t["task_id"].as_str().unwrap_or(""),
            t["mean_k"].as_f64().unwrap_or(0.0),
            fmt_opt(t["model"]["precision"].as_f64()),
            fmt_opt(t["forest_precision"].as_f64()),
            b("random"),
            b("baseline1"),
            b("baseline2"),
        );
    }
    let _ = writeln!(md, "\n## Dwell labels\n");
    let _ = writeln!(
        md,
        "- Jaccard mean, adjacent labels: {}; non-adjacent: {}",
        fmt_opt(summary["jaccard_adjacent_mean"].as_f64()),
        fmt_opt(summary["jaccard_nonadjacent_mean"].as_f64())
    );
    let _ = writeln!(md, "- fallback share: {}\n", fmt_opt(summary["dwell_fallback_share"].as_f64()));
    let _ = writeln!(md, "## Handling reduction envelope\n");
    let _ = writeln!(md, "| alpha | beta | delta_s | delta_d | reduction |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for r in summary["impact"].as_array().into_iter().flatten() {
        let f = |k: &str| r[k].as_f64().unwrap_or(f64::NAN);
        let _ = writeln!(
            md,
            "| {:.2} | {:.2} | {:.2} | {:.2} | {:.4} |",
            f("alpha"),
            f("beta"),
            f("delta_s"),
            f("delta_d"),
            f("reduction")
        );
    }
    let _ = writeln!(md, "\n## Files\n");
    for n in &names {
        let _ = writeln!(md, "- `{n}`");
    }
    let mut f = fs::File::create(dir.join("REPORT.md")).map_err(fail("report"))?;
    f.write_all(md.as_bytes()).map_err(fail("report"))?;

    let mut files = BTreeMap::new();
    for n in names.iter().map(String::as_str).chain(["REPORT.md"]) {
        files.insert(n.to_string(), sha256_file(&dir.join(n)).map_err(fail("report"))?);
    }
    let bundle = hex::encode(Sha256::digest(serde_json::to_vec(&files).map_err(fail("report"))?));
    let manifest = json!({ "config_digest": cfg.digest(), "bundle_digest": bundle, "files": files });
    fs::write(dir.join("MANIFEST.json"), serde_json::to_string_pretty(&manifest).map_err(fail("report"))? + "\n")
        .map_err(fail("report"))?;
    log::info!("report bundle {bundle}");
    Ok(())
}

/// Every stage in order; `generate` runs only when a `[world]` section is present.
pub fn all(cfg: &RunConfig, out: &Layout) -> Result<(), CliError> {
    if cfg.world.is_some() {
        generate(cfg, out)?;
    } else if cfg.paths.containers.is_none() {
        return Err(ConfigError::Invalid("`all` needs a [world] section or paths.containers/paths.events".into()).into());
    }
    ingest(cfg, out)?;
    link(cfg, out)?;
    classify(cfg, out)?;
    features(cfg, out, &[])?;
    labels(cfg, out, &[])?;
    run_experiments(cfg, out)?;
    assign_stage(cfg, out)?;
    evaluate_stage(cfg, out)?;
    report(cfg, out)
}
