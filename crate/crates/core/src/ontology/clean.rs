use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::raw::{RawContainerRow, RawEventRow, RawStore};
use super::{EventKind, OntologyError};
use crate::time::{parse_timestamp, Timestamp};

/// Closed vocabularies frozen at clean time. Categorical fields store an
/// index into the matching list; lists are sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub dimension: Vec<String>,
    pub container_type: Vec<String>,
    pub cargo_type: Vec<String>,
    pub shipping_line: Vec<String>,
    pub route: Vec<String>,
}

impl Vocabularies {
    fn lookup(list: &[String], value: &str) -> u16 {
        list.binary_search_by(|v| v.as_str().cmp(value))
            .expect("value present in frozen vocabulary") as u16
    }
}

/// A typed container row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanContainer {
    pub container_id: String,
    pub net_weight: f64,
    pub gross_weight: f64,
    pub dimension: u16,
    pub container_type: u16,
    pub cargo_type: u16,
    pub hazardous: bool,
    pub liner_client: bool,
    pub shipping_line: u16,
    pub route: u16,
    pub consignee_raw: String,
    pub merchandise_description: String,
    pub scheduled_arrival: Timestamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanEvent {
    pub container_id: String,
    pub kind: EventKind,
    pub at: Timestamp,
}

/// A raw row set aside with the reason it failed cleaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuarantinedRow<R> {
    pub row: R,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CleanStore {
    pub containers: Vec<CleanContainer>,
    pub events: Vec<CleanEvent>,
    pub vocab: Vocabularies,
    pub rejected_containers: Vec<QuarantinedRow<RawContainerRow>>,
    pub rejected_events: Vec<QuarantinedRow<RawEventRow>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanOptions {
    /// Abort when more than this fraction of container rows is rejected.
    pub max_reject_fraction: f64,
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self {
            max_reject_fraction: 0.5,
        }
    }
}

struct Parsed {
    container_id: String,
    net_weight: f64,
    gross_weight: f64,
    dimension: String,
    container_type: String,
    cargo_type: String,
    hazardous: bool,
    liner_client: bool,
    shipping_line: String,
    route: String,
    consignee_raw: String,
    merchandise_description: String,
    scheduled_arrival: Timestamp,
}

pub fn clean(raw: &RawStore, options: CleanOptions) -> Result<CleanStore, OntologyError> {
    let mut parsed = Vec::with_capacity(raw.containers.len());
    let mut rejected_containers = Vec::new();
    let mut seen = HashSet::new();
    for row in &raw.containers {
        match parse_container(row) {
            Ok(p) if !seen.insert(p.container_id.clone()) => rejected_containers.push(QuarantinedRow {
                row: row.clone(),
                reason: "duplicate container id".to_string(),
            }),
            Ok(p) => parsed.push(p),
            Err(reason) => rejected_containers.push(QuarantinedRow {
                row: row.clone(),
                reason: reason.to_string(),
            }),
        }
    }

    let total = raw.containers.len();
    if total > 0 && rejected_containers.len() as f64 / total as f64 > options.max_reject_fraction {
        return Err(OntologyError::SchemaMismatch {
            rejected: rejected_containers.len(),
            total,
            max_fraction: options.max_reject_fraction,
        });
    }

    let freeze = |f: fn(&Parsed) -> &str| -> Vec<String> {
        parsed
            .iter()
            .map(|p| f(p).to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    let vocab = Vocabularies {
        dimension: freeze(|p| &p.dimension),
        container_type: freeze(|p| &p.container_type),
        cargo_type: freeze(|p| &p.cargo_type),
        shipping_line: freeze(|p| &p.shipping_line),
        route: freeze(|p| &p.route),
    };

    let containers = parsed
        .into_iter()
        .map(|p| CleanContainer {
            dimension: Vocabularies::lookup(&vocab.dimension, &p.dimension),
            container_type: Vocabularies::lookup(&vocab.container_type, &p.container_type),
            cargo_type: Vocabularies::lookup(&vocab.cargo_type, &p.cargo_type),
            shipping_line: Vocabularies::lookup(&vocab.shipping_line, &p.shipping_line),
            route: Vocabularies::lookup(&vocab.route, &p.route),
            container_id: p.container_id,
            net_weight: p.net_weight,
            gross_weight: p.gross_weight,
            hazardous: p.hazardous,
            liner_client: p.liner_client,
            consignee_raw: p.consignee_raw,
            merchandise_description: p.merchandise_description,
            scheduled_arrival: p.scheduled_arrival,
        })
        .collect();

    let mut events = Vec::with_capacity(raw.events.len());
    let mut rejected_events = Vec::new();
    for row in &raw.events {
        let kind = EventKind::parse(&row.kind);
        let at = parse_timestamp(&row.timestamp);
        let id = row.container_id.trim();
        match (kind, at) {
            _ if id.is_empty() => rejected_events.push(QuarantinedRow {
                row: row.clone(),
                reason: "missing container id".to_string(),
            }),
            (Some(kind), Some(at)) => events.push(CleanEvent {
                container_id: id.to_string(),
                kind,
                at,
            }),
            (None, _) => rejected_events.push(QuarantinedRow {
                row: row.clone(),
                reason: "unknown event kind".to_string(),
            }),
            (_, None) => rejected_events.push(QuarantinedRow {
                row: row.clone(),
                reason: "unparsable timestamp".to_string(),
            }),
        }
    }

    Ok(CleanStore {
        containers,
        events,
        vocab,
        rejected_containers,
        rejected_events,
    })
}

fn parse_container(row: &RawContainerRow) -> Result<Parsed, &'static str> {
    let container_id = row.container_id.trim();
    if container_id.is_empty() {
        return Err("missing container id");
    }
    let net_weight = parse_weight(&row.net_weight).ok_or("unparsable weight")?;
    let gross_weight = parse_weight(&row.gross_weight).ok_or("unparsable weight")?;
    if net_weight < 0.0 || gross_weight < 0.0 {
        return Err("negative weight");
    }
    if net_weight > gross_weight {
        return Err("weight inversion");
    }
    let consignee_raw = row.consignee.trim();
    if consignee_raw.is_empty() {
        return Err("missing consignee");
    }
    let scheduled_arrival =
        parse_timestamp(&row.scheduled_arrival).ok_or("unparsable timestamp")?;
    let dimension: String = row.dimension.chars().filter(char::is_ascii_digit).collect();
    if dimension.is_empty() {
        return Err("unparsable dimension");
    }
    Ok(Parsed {
        container_id: container_id.to_string(),
        net_weight,
        gross_weight,
        dimension,
        container_type: normalize_category(&row.container_type).ok_or("missing container type")?,
        cargo_type: normalize_category(&row.cargo_type).ok_or("missing cargo type")?,
        hazardous: parse_flag(&row.hazardous).ok_or("unparsable hazardous flag")?,
        liner_client: parse_flag(&row.liner_client).ok_or("unparsable liner flag")?,
        shipping_line: normalize_category(&row.shipping_line).ok_or("missing shipping line")?,
        route: normalize_category(&row.route).ok_or("missing route")?,
        consignee_raw: consignee_raw.to_string(),
        merchandise_description: row.merchandise_description.trim().to_string(),
        scheduled_arrival,
    })
}

/// Weights may carry thousands separators (`12,500`) and a unit suffix.
fn parse_weight(s: &str) -> Option<f64> {
    let s = s.trim();
    let s = s
        .strip_suffix("KG")
        .or_else(|| s.strip_suffix("kg"))
        .unwrap_or(s)
        .trim();
    let cleaned: String = s.chars().filter(|&c| c != ',' && c != '_').collect();
    let v: f64 = cleaned.parse().ok()?;
    v.is_finite().then_some(v)
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_uppercase().as_str() {
        "Y" | "YES" | "1" | "TRUE" | "T" => Some(true),
        "N" | "NO" | "0" | "FALSE" | "F" | "" => Some(false),
        _ => None,
    }
}

fn normalize_category(s: &str) -> Option<String> {
    let v = s.split_whitespace().collect::<Vec<_>>().join("_").to_uppercase();
    (!v.is_empty()).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn raw_row(id: &str) -> RawContainerRow {
        RawContainerRow {
            container_id: id.to_string(),
            net_weight: "10000".into(),
            gross_weight: "12,500".into(),
            dimension: "40".into(),
            container_type: "dry".into(),
            cargo_type: "GENERAL".into(),
            hazardous: "N".into(),
            liner_client: "yes".into(),
            shipping_line: "LINE01".into(),
            route: "R01".into(),
            consignee: "ACME LOGISTICS".into(),
            merchandise_description: "TOYS".into(),
            scheduled_arrival: "2022-01-01T05:00:00".into(),
        }
    }

    #[test]
    fn thousands_separator_is_normalized() {
        assert_eq!(parse_weight("12,500"), Some(12500.0));
        assert_eq!(parse_weight(" 3500 KG"), Some(3500.0));
        assert_eq!(parse_weight("N/A"), None);
        let store = clean(
            &RawStore {
                containers: vec![raw_row("C1")],
                events: vec![],
            },
            CleanOptions::default(),
        )
        .unwrap();
        assert_eq!(store.containers[0].gross_weight, 12500.0);
        assert!(store.containers[0].liner_client);
        assert_eq!(store.vocab.container_type, vec!["DRY".to_string()]);
    }

    #[test]
    fn weight_inversion_is_quarantined_with_reason() {
        let mut bad = raw_row("C2");
        bad.net_weight = "20000".into();
        let store = clean(
            &RawStore {
                containers: vec![raw_row("C1"), bad.clone()],
                events: vec![],
            },
            CleanOptions::default(),
        )
        .unwrap();
        assert_eq!(store.containers.len(), 1);
        assert_eq!(store.rejected_containers.len(), 1);
        assert_eq!(store.rejected_containers[0].row, bad);
        assert_eq!(store.rejected_containers[0].reason, "weight inversion");
    }

    #[test]
    fn high_rejection_rate_aborts() {
        let mut bad = raw_row("C2");
        bad.consignee = "   ".into();
        let mut bad2 = raw_row("C3");
        bad2.scheduled_arrival = "2022-13-45T99:00:00".into();
        let raw = RawStore {
            containers: vec![raw_row("C1"), bad, bad2],
            events: vec![],
        };
        assert!(matches!(
            clean(&raw, CleanOptions::default()),
            Err(OntologyError::SchemaMismatch { rejected: 2, total: 3, .. })
        ));
        let lenient = clean(&raw, CleanOptions { max_reject_fraction: 0.9 }).unwrap();
        let reasons: Vec<_> = lenient.rejected_containers.iter().map(|q| q.reason.as_str()).collect();
        assert_eq!(reasons, vec!["missing consignee", "unparsable timestamp"]);
    }

    #[test]
    fn duplicate_ids_and_bad_events_are_quarantined() {
        let raw = RawStore {
            containers: vec![raw_row("C1"), raw_row("C1")],
            events: vec![
                RawEventRow {
                    container_id: "C1".into(),
                    kind: "Arrival".into(),
                    timestamp: "2022-01-01 05:00:00".into(),
                },
                RawEventRow {
                    container_id: "C1".into(),
                    kind: "teleport".into(),
                    timestamp: "2022-01-01T05:00:00".into(),
                },
            ],
        };
        let store = clean(&raw, CleanOptions { max_reject_fraction: 0.9 }).unwrap();
        assert_eq!(store.rejected_containers[0].reason, "duplicate container id");
        assert_eq!(store.events.len(), 1);
        assert_eq!(store.rejected_events[0].reason, "unknown event kind");
    }
}
