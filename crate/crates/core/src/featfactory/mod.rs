//! Leakage-safe features for a daily cohort, computed only from events
//! strictly before the prediction instant.

mod engine;

pub use engine::FeatureEngine;

use std::path::Path;

use chrono::{Datelike, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ontology::{EventKind, OntologyError, OntologyStore};
use crate::time::{days, epoch_seconds, format_timestamp, Timestamp, SECONDS_PER_DAY};

use engine::{key_value, History};

pub const DEFAULT_WINDOWS: [u32; 4] = [7, 21, 42, 182];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Simple,
    SimpleCount,
    Aggregate,
    Difference,
    Service,
    Dwell,
    Movement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKey {
    Consignee,
    Chapter,
    ShippingLine,
    Route,
    CargoType,
}

impl EntityKey {
    pub const ALL: [EntityKey; 5] = [
        EntityKey::Consignee,
        EntityKey::Chapter,
        EntityKey::ShippingLine,
        EntityKey::Route,
        EntityKey::CargoType,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKey::Consignee => "consignee",
            EntityKey::Chapter => "chapter",
            EntityKey::ShippingLine => "shipping_line",
            EntityKey::Route => "route",
            EntityKey::CargoType => "cargo_type",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Count,
    Rate,
    Mean,
    Stddev,
    PctChange,
}

impl Statistic {
    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Count => "count",
            Statistic::Rate => "rate",
            Statistic::Mean => "mean",
            Statistic::Stddev => "stddev",
            Statistic::PctChange => "pct_change",
        }
    }
}

/// Atemporal container attributes used by simple features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseAttribute {
    NetWeight,
    GrossWeight,
    Hazardous,
    LinerClient,
    Dimension,
    ContainerType,
    CargoType,
    HsSection,
    ArrivalWeekday,
    ArrivalHour,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub category: Category,
    pub entity_key: Option<EntityKey>,
    pub window_days: Option<u32>,
    pub statistic: Option<Statistic>,
    pub attribute: Option<BaseAttribute>,
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid feature spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("container `{0}` is not in the store")]
    UnknownContainer(String),
    #[error("container `{id}` is not in the cohort for {as_of}")]
    NotInCohort { id: String, as_of: String },
    #[error("feature `{0}` needs resolved consignees; run linkage first")]
    UnresolvedConsignee(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl From<OntologyError> for FeatureError {
    fn from(e: OntologyError) -> Self {
        match e {
            OntologyError::UnknownContainer(id) => FeatureError::UnknownContainer(id),
            other => FeatureError::Io(std::io::Error::other(other.to_string())),
        }
    }
}

impl FeatureSpec {
    pub fn simple(attribute: BaseAttribute) -> Self {
        let name = serde_json::to_value(attribute)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        Self {
            name,
            category: Category::Simple,
            entity_key: None,
            window_days: None,
            statistic: None,
            attribute: Some(attribute),
        }
    }

    pub fn windowed(category: Category, key: EntityKey, statistic: Statistic, window_days: u32) -> Self {
        let prefix = match category {
            Category::SimpleCount => "arrivals",
            Category::Aggregate => "arrival_share",
            Category::Difference => "arrivals",
            Category::Service => "service",
            Category::Dwell => "dwell",
            Category::Movement => "moves",
            Category::Simple => "simple",
        };
        Self {
            name: format!("{prefix}_{}_{}_{}d", statistic.as_str(), key.as_str(), window_days),
            category,
            entity_key: Some(key),
            window_days: Some(window_days),
            statistic: Some(statistic),
            attribute: None,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let fail = |reason: &str| {
            Err(FeatureError::InvalidSpec {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.category == Category::Simple {
            if self.attribute.is_none() {
                return fail("simple features need an attribute");
            }
            return Ok(());
        }
        let (Some(w), Some(stat)) = (self.window_days, self.statistic) else {
            return fail("windowed features need window_days and statistic");
        };
        if self.entity_key.is_none() {
            return fail("windowed features need an entity key");
        }
        if w == 0 {
            return fail("window_days must be positive");
        }
        use Statistic::*;
        let ok = match self.category {
            Category::SimpleCount => stat == Count,
            Category::Aggregate => stat == Rate,
            Category::Difference => stat == PctChange || (stat == Stddev && w % 7 == 0 && w >= 14),
            Category::Service => matches!(stat, Count | Rate),
            Category::Dwell => matches!(stat, Count | Mean | Stddev),
            Category::Movement => matches!(stat, Count | Mean),
            Category::Simple => unreachable!(),
        };
        if ok {
            Ok(())
        } else {
            fail("statistic not supported for this category and window")
        }
    }

    /// Imputed statistics get a companion `_missing` indicator column.
    fn has_indicator(&self) -> bool {
        matches!(
            (self.category, self.statistic),
            (Category::Service, Some(Statistic::Rate))
                | (Category::Dwell, Some(Statistic::Mean | Statistic::Stddev))
                | (Category::Movement, Some(Statistic::Mean))
        )
    }

    pub fn is_windowed(&self) -> bool {
        self.category != Category::Simple
    }
}

/// The default feature list over the given windows.
pub fn default_specs(windows: &[u32]) -> Vec<FeatureSpec> {
    use BaseAttribute::*;
    use Category as C;
    use EntityKey as K;
    use Statistic as S;
    let mut specs: Vec<FeatureSpec> = [
        NetWeight,
        GrossWeight,
        Hazardous,
        LinerClient,
        Dimension,
        ContainerType,
        CargoType,
        HsSection,
        ArrivalWeekday,
        ArrivalHour,
    ]
    .into_iter()
    .map(FeatureSpec::simple)
    .collect();
    let long: Vec<u32> = windows.iter().copied().filter(|&w| w >= 21).collect();
    for &w in windows {
        for k in [K::Consignee, K::Chapter, K::ShippingLine, K::Route] {
            specs.push(FeatureSpec::windowed(C::SimpleCount, k, S::Count, w));
        }
    }
    for &w in &long {
        for k in [K::Consignee, K::Chapter] {
            specs.push(FeatureSpec::windowed(C::Aggregate, k, S::Rate, w));
            specs.push(FeatureSpec::windowed(C::Difference, k, S::PctChange, w));
            if w % 7 == 0 {
                specs.push(FeatureSpec::windowed(C::Difference, k, S::Stddev, w));
            }
            specs.push(FeatureSpec::windowed(C::Service, k, S::Count, w));
        }
        for k in [K::Consignee, K::Chapter, K::ShippingLine] {
            specs.push(FeatureSpec::windowed(C::Service, k, S::Rate, w));
        }
        for k in [K::Consignee, K::Chapter] {
            for s in [S::Mean, S::Stddev, S::Count] {
                specs.push(FeatureSpec::windowed(C::Dwell, k, s, w));
            }
            specs.push(FeatureSpec::windowed(C::Movement, k, S::Count, w));
            specs.push(FeatureSpec::windowed(C::Movement, k, S::Mean, w));
        }
    }
    specs
}

/// Column names produced by `specs` against this store's vocabularies.
pub fn column_names(store: &OntologyStore, specs: &[FeatureSpec]) -> Vec<String> {
    let mut cols = Vec::new();
    for spec in specs {
        match spec.attribute {
            Some(BaseAttribute::Dimension) => {
                cols.extend(store.vocab().dimension.iter().map(|v| format!("dimension={v}")))
            }
            Some(BaseAttribute::ContainerType) => cols.extend(
                store.vocab().container_type.iter().map(|v| format!("container_type={v}")),
            ),
            Some(BaseAttribute::CargoType) => {
                cols.extend(store.vocab().cargo_type.iter().map(|v| format!("cargo_type={v}")))
            }
            _ => {
                cols.push(spec.name.clone());
                if spec.has_indicator() {
                    cols.push(format!("{}_missing", spec.name));
                }
            }
        }
    }
    cols
}

pub fn schema_hash(specs: &[FeatureSpec], columns: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(specs).expect("specs serialize"));
    h.update(b"\n");
    h.update(columns.join("\n").as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub as_of: Timestamp,
    pub container_ids: Vec<String>,
    pub columns: Vec<String>,
    pub specs: Vec<FeatureSpec>,
    pub schema_hash: String,
    /// Row-major values, `container_ids.len() * columns.len()`.
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.container_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.columns.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn get(&self, row: usize, column: &str) -> Option<f64> {
        self.column_index(column).map(|c| self.row(row)[c])
    }

    /// Writes `<stem>.csv` (container_id + features) and `<stem>.manifest.json`.
    pub fn write(&self, csv_path: &Path) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let mut header = vec!["container_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, id) in self.container_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let manifest = serde_json::json!({
            "as_of": format_timestamp(self.as_of),
            "schema_hash": self.schema_hash,
            "rows": self.n_rows(),
            "specs": self.specs,
        });
        std::fs::write(
            csv_path.with_extension("manifest.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
        Ok(())
    }
}

/// Features for the cohort of `as_of`; every id must be scheduled to arrive
/// within `[as_of, as_of + 24h)`.
pub fn compute_matrix(
    store: &OntologyStore,
    cohort: &[String],
    as_of: Timestamp,
    specs: &[FeatureSpec],
) -> Result<FeatureMatrix, FeatureError> {
    for id in cohort {
        let e = store.entity(store.index_of(id)?);
        let t = e.container.scheduled_arrival;
        if t < as_of || t >= as_of + days(1) {
            return Err(FeatureError::NotInCohort {
                id: id.clone(),
                as_of: format_timestamp(as_of),
            });
        }
    }
    let engine = FeatureEngine::with_cutoff(store, epoch_seconds(as_of));
    compute_rows(&engine, store, cohort, as_of, specs)
}

/// Row computation without the cohort check, against a prebuilt engine.
/// The engine may index events past `as_of`; queries never read them.
pub fn compute_rows(
    engine: &FeatureEngine,
    store: &OntologyStore,
    ids: &[String],
    as_of: Timestamp,
    specs: &[FeatureSpec],
) -> Result<FeatureMatrix, FeatureError> {
    for s in specs {
        s.validate()?;
        if s.entity_key == Some(EntityKey::Consignee) && !store.is_linked() {
            return Err(FeatureError::UnresolvedConsignee(s.name.clone()));
        }
    }
    let columns = column_names(store, specs);
    let idx: Vec<usize> = ids
        .iter()
        .map(|id| store.index_of(id))
        .collect::<Result<_, _>>()?;
    let t = epoch_seconds(as_of);
    let mut values = Vec::with_capacity(ids.len() * columns.len());
    let mut globals = GlobalCache::default();
    for &i in &idx {
        let start = values.len();
        for spec in specs {
            push_values(engine, store, i, t, spec, &mut globals, &mut values);
        }
        debug_assert_eq!(values.len() - start, columns.len());
    }
    Ok(FeatureMatrix {
        as_of,
        container_ids: ids.to_vec(),
        schema_hash: schema_hash(specs, &columns),
        columns,
        specs: specs.to_vec(),
        values,
    })
}

/// Global window statistics used for cold-start imputation, memoized per window.
#[derive(Default)]
struct GlobalCache {
    entries: Vec<(Category, Statistic, u32, f64)>,
}

impl GlobalCache {
    fn get(&mut self, cat: Category, stat: Statistic, w: u32, f: impl FnOnce() -> f64) -> f64 {
        if let Some(e) = self.entries.iter().find(|e| e.0 == cat && e.1 == stat && e.2 == w) {
            return e.3;
        }
        let v = f();
        self.entries.push((cat, stat, w, v));
        v
    }
}

fn service_rate(h: &History, lo: i64, hi: i64) -> Option<f64> {
    let (n, served) = h.served(lo, hi);
    (n > 0).then(|| served as f64 / n as f64)
}

fn dwell_stat(h: &History, lo: i64, hi: i64, stat: Statistic) -> Option<f64> {
    let (n, sum, sq, _) = h.exited(lo, hi);
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    Some(match stat {
        Statistic::Mean => mean,
        _ => (sq / n as f64 - mean * mean).max(0.0).sqrt(),
    })
}

fn moves_mean(h: &History, lo: i64, hi: i64) -> Option<f64> {
    let (n, _, _, moves) = h.exited(lo, hi);
    (n > 0).then(|| moves / n as f64)
}

fn weekly_stddev(h: &History, w: u32, t: i64) -> f64 {
    let weeks = (w / 7) as i64;
    let week = 7 * SECONDS_PER_DAY;
    let counts: Vec<f64> = (0..weeks)
        .map(|k| h.count(EventKind::Arrival, t - (k + 1) * week, t - k * week) as f64)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    (counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / counts.len() as f64).sqrt()
}

fn push_values(
    engine: &FeatureEngine,
    store: &OntologyStore,
    idx: usize,
    t: i64,
    spec: &FeatureSpec,
    globals: &mut GlobalCache,
    out: &mut Vec<f64>,
) {
    let e = store.entity(idx);
    let c = &e.container;
    if let Some(attr) = spec.attribute {
        let one_hot = |out: &mut Vec<f64>, n: usize, v: u16| {
            out.extend((0..n).map(|i| if i == v as usize { 1.0 } else { 0.0 }))
        };
        match attr {
            BaseAttribute::NetWeight => out.push(c.net_weight),
            BaseAttribute::GrossWeight => out.push(c.gross_weight),
            BaseAttribute::Hazardous => out.push(c.hazardous as u8 as f64),
            BaseAttribute::LinerClient => out.push(c.liner_client as u8 as f64),
            BaseAttribute::Dimension => one_hot(out, store.vocab().dimension.len(), c.dimension),
            BaseAttribute::ContainerType => one_hot(out, store.vocab().container_type.len(), c.container_type),
            BaseAttribute::CargoType => one_hot(out, store.vocab().cargo_type.len(), c.cargo_type),
            BaseAttribute::HsSection => out.push(e.hs_section.map_or(0.0, f64::from)),
            BaseAttribute::ArrivalWeekday => {
                out.push(c.scheduled_arrival.weekday().num_days_from_monday() as f64)
            }
            BaseAttribute::ArrivalHour => out.push(c.scheduled_arrival.hour() as f64),
        }
        return;
    }

    let key = spec.entity_key.expect("validated");
    let w = spec.window_days.expect("validated");
    let stat = spec.statistic.expect("validated");
    let hi = t.min(engine.cutoff());
    let lo = t - w as i64 * SECONDS_PER_DAY;
    let empty = History::default();
    let h = key_value(e, key)
        .and_then(|v| engine.history(key, v))
        .unwrap_or(&empty);
    let g = engine.global();

    let imputed = |out: &mut Vec<f64>, v: Option<f64>, fallback: f64| match v {
        Some(x) => out.extend([x, 0.0]),
        None => out.extend([fallback, 1.0]),
    };
    match (spec.category, stat) {
        (Category::SimpleCount, _) => out.push(h.count(EventKind::Arrival, lo, hi) as f64),
        (Category::Aggregate, _) => {
            let total = g.count(EventKind::Arrival, lo, hi);
            let own = h.count(EventKind::Arrival, lo, hi);
            out.push(if total == 0 { 0.0 } else { own as f64 / total as f64 });
        }
        (Category::Difference, Statistic::PctChange) => {
            let recent = h.count(EventKind::Arrival, lo, hi) as f64;
            let prior = h.count(EventKind::Arrival, lo - w as i64 * SECONDS_PER_DAY, lo) as f64;
            out.push((recent - prior) / prior.max(1.0));
        }
        (Category::Difference, _) => out.push(weekly_stddev(h, w, hi)),
        (Category::Service, Statistic::Count) => out.push(h.count(EventKind::Service, lo, hi) as f64),
        (Category::Service, _) => {
            let fallback = globals.get(Category::Service, stat, w, || service_rate(g, lo, hi).unwrap_or(0.0));
            imputed(out, service_rate(h, lo, hi), fallback);
        }
        (Category::Dwell, Statistic::Count) => out.push(h.exited(lo, hi).0 as f64),
        (Category::Dwell, _) => {
            let fallback = globals.get(Category::Dwell, stat, w, || dwell_stat(g, lo, hi, stat).unwrap_or(0.0));
            imputed(out, dwell_stat(h, lo, hi, stat), fallback);
        }
        (Category::Movement, Statistic::Count) => out.push(h.count(EventKind::YardMove, lo, hi) as f64),
        (Category::Movement, _) => {
            let fallback = globals.get(Category::Movement, stat, w, || moves_mean(g, lo, hi).unwrap_or(0.0));
            imputed(out, moves_mean(h, lo, hi), fallback);
        }
        (Category::Simple, _) => unreachable!("simple specs carry an attribute"),
    }
}

/// Linear-scan count of `kind` events of entities with `key == value` in
/// `[as_of - window_days, as_of)`.
pub fn rolling_count(
    store: &OntologyStore,
    key: EntityKey,
    value: u32,
    kind: EventKind,
    window_days: u32,
    as_of: Timestamp,
) -> usize {
    assert!(window_days >= 1, "window_days must be at least 1");
    let lo = as_of - days(window_days as i64);
    store
        .entities()
        .iter()
        .enumerate()
        .filter(|(_, e)| key_value(e, key) == Some(value))
        .map(|(i, _)| {
            store
                .events_of(i)
                .iter()
                .filter(|ev| ev.kind == kind && ev.at >= lo && ev.at < as_of)
                .count()
        })
        .sum()
}

/// `(recent - prior) / max(prior, 1)` over two adjacent windows of arrivals.
pub fn pct_change(store: &OntologyStore, spec: &FeatureSpec, value: u32, as_of: Timestamp) -> f64 {
    let key = spec.entity_key.expect("windowed spec");
    let w = spec.window_days.expect("windowed spec");
    let recent = rolling_count(store, key, value, EventKind::Arrival, w, as_of) as f64;
    let prior = rolling_count(store, key, value, EventKind::Arrival, w, as_of - days(w as i64)) as f64;
    (recent - prior) / prior.max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageFinding {
    pub container_id: String,
    pub column: String,
    pub original: f64,
    pub recomputed: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub as_of: String,
    pub cells_checked: usize,
    pub findings: Vec<LeakageFinding>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Recomputes the matrix on a copy of the store censored at `matrix.as_of`
/// and reports every cell that differs.
pub fn leakage_audit(matrix: &FeatureMatrix, store: &OntologyStore) -> Result<LeakageReport, FeatureError> {
    let censored = store.censored(matrix.as_of);
    let engine = FeatureEngine::new(&censored);
    let fresh = compute_rows(&engine, &censored, &matrix.container_ids, matrix.as_of, &matrix.specs)?;
    let mut report = LeakageReport {
        as_of: format_timestamp(matrix.as_of),
        cells_checked: matrix.values.len(),
        findings: Vec::new(),
    };
    for (r, id) in matrix.container_ids.iter().enumerate() {
        for (c, col) in matrix.columns.iter().enumerate() {
            let (a, b) = (matrix.row(r)[c], fresh.row(r)[c]);
            if (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                report.findings.push(LeakageFinding {
                    container_id: id.clone(),
                    column: col.clone(),
                    original: a,
                    recomputed: b,
                });
            }
        }
    }
    Ok(report)
}
