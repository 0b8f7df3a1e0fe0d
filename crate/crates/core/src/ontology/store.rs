use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::clean::{CleanContainer, CleanStore, Vocabularies};
use super::raw::RawEventRow;
use super::{EventKind, OntologyError};
use crate::time::{days, format_timestamp, parse_timestamp, Timestamp};

/// A container entity: atemporal attributes plus resolved enrichments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OntologyEntity {
    #[serde(flatten)]
    pub container: CleanContainer,
    /// Canonical consignee component, filled by linkage.
    pub consignee_id: Option<u32>,
    /// HS chapter 1–97, `None` while unclassified.
    pub hs_chapter: Option<u8>,
    pub hs_section: Option<u8>,
}

impl OntologyEntity {
    pub fn id(&self) -> &str {
        &self.container.container_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Event {
    pub at: Timestamp,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuarantinedEvent {
    pub row: RawEventRow,
    pub reason: String,
}

/// Entities and their time-ordered event streams.
///
/// Every temporal read goes through an as-of cutoff with `[-inf, t)` semantics.
#[derive(Debug, Clone)]
pub struct OntologyStore {
    entities: Vec<OntologyEntity>,
    by_id: HashMap<String, usize>,
    /// Events grouped by entity, time-ordered within each group.
    events: Vec<Event>,
    offsets: Vec<usize>,
    /// Entity indices sorted by scheduled arrival.
    arrival_order: Vec<usize>,
    horizon: Timestamp,
    vocab: Vocabularies,
    consignee_names: Vec<String>,
    quarantined: Vec<QuarantinedEvent>,
}

pub fn build_ontology(clean: CleanStore) -> OntologyStore {
    let CleanStore {
        containers,
        events,
        vocab,
        ..
    } = clean;
    let entities: Vec<OntologyEntity> = containers
        .into_iter()
        .map(|container| OntologyEntity {
            container,
            consignee_id: None,
            hs_chapter: None,
            hs_section: None,
        })
        .collect();
    let by_id: HashMap<String, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id().to_string(), i))
        .collect();

    let mut grouped: Vec<Vec<Event>> = vec![Vec::new(); entities.len()];
    let mut quarantined = Vec::new();
    let to_row = |id: &str, kind: EventKind, at: Timestamp| RawEventRow {
        container_id: id.to_string(),
        kind: kind.as_str().to_string(),
        timestamp: format_timestamp(at),
    };
    for ev in events {
        match by_id.get(&ev.container_id) {
            Some(&i) => grouped[i].push(Event {
                at: ev.at,
                kind: ev.kind,
            }),
            None => quarantined.push(QuarantinedEvent {
                row: to_row(&ev.container_id, ev.kind, ev.at),
                reason: "orphan event".to_string(),
            }),
        }
    }

    // Enforce arrival -> {service, yard_move} -> exit per container.
    for (i, evs) in grouped.iter_mut().enumerate() {
        evs.sort();
        let id = entities[i].id();
        let arrival = evs.iter().find(|e| e.kind == EventKind::Arrival).map(|e| e.at);
        let exit = evs.iter().find(|e| e.kind == EventKind::Exit).map(|e| e.at);
        let mut seen_arrival = false;
        let mut seen_exit = false;
        evs.retain(|e| {
            let reason = match e.kind {
                EventKind::Arrival if seen_arrival => Some("duplicate arrival"),
                EventKind::Arrival => {
                    seen_arrival = true;
                    None
                }
                EventKind::Exit if seen_exit => Some("duplicate exit"),
                EventKind::Exit if arrival.is_some_and(|a| e.at <= a) => {
                    Some("exit not after arrival")
                }
                EventKind::Exit => {
                    seen_exit = true;
                    None
                }
                _ if arrival.is_some_and(|a| e.at < a) => Some("event before arrival"),
                _ if exit.is_some_and(|x| e.at > x) => Some("event after exit"),
                _ => None,
            };
            if let Some(reason) = reason {
                quarantined.push(QuarantinedEvent {
                    row: to_row(id, e.kind, e.at),
                    reason: reason.to_string(),
                });
            }
            reason.is_none()
        });
    }

    let mut offsets = Vec::with_capacity(entities.len() + 1);
    offsets.push(0);
    let mut flat = Vec::with_capacity(grouped.iter().map(Vec::len).sum());
    for evs in grouped {
        flat.extend(evs);
        offsets.push(flat.len());
    }
    let horizon = flat
        .iter()
        .map(|e| e.at)
        .max()
        .map(|t| t + chrono::TimeDelta::seconds(1))
        .unwrap_or_default();
    OntologyStore::assemble(entities, flat, offsets, horizon, vocab, Vec::new(), quarantined)
}

impl OntologyStore {
    fn assemble(
        entities: Vec<OntologyEntity>,
        events: Vec<Event>,
        offsets: Vec<usize>,
        horizon: Timestamp,
        vocab: Vocabularies,
        consignee_names: Vec<String>,
        quarantined: Vec<QuarantinedEvent>,
    ) -> Self {
        let by_id = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id().to_string(), i))
            .collect();
        let mut arrival_order: Vec<usize> = (0..entities.len()).collect();
        arrival_order.sort_by(|&a, &b| {
            entities[a]
                .container
                .scheduled_arrival
                .cmp(&entities[b].container.scheduled_arrival)
                .then_with(|| entities[a].id().cmp(entities[b].id()))
        });
        Self {
            entities,
            by_id,
            events,
            offsets,
            arrival_order,
            horizon,
            vocab,
            consignee_names,
            quarantined,
        }
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entities(&self) -> &[OntologyEntity] {
        &self.entities
    }

    pub fn entity(&self, idx: usize) -> &OntologyEntity {
        &self.entities[idx]
    }

    pub fn index_of(&self, container_id: &str) -> Result<usize, OntologyError> {
        self.by_id
            .get(container_id)
            .copied()
            .ok_or_else(|| OntologyError::UnknownContainer(container_id.to_string()))
    }

    pub fn vocab(&self) -> &Vocabularies {
        &self.vocab
    }

    /// Instant up to which events are observed (exclusive).
    pub fn horizon(&self) -> Timestamp {
        self.horizon
    }

    pub fn with_horizon(mut self, horizon: Timestamp) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn quarantined_events(&self) -> &[QuarantinedEvent] {
        &self.quarantined
    }

    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// All events of one entity, ascending in time.
    pub fn events_of(&self, idx: usize) -> &[Event] {
        &self.events[self.offsets[idx]..self.offsets[idx + 1]]
    }

    /// Events of `container_id` strictly before `t`.
    pub fn events_before(&self, container_id: &str, t: Timestamp) -> Result<&[Event], OntologyError> {
        let evs = self.events_of(self.index_of(container_id)?);
        let end = evs.partition_point(|e| e.at < t);
        Ok(&evs[..end])
    }

    pub fn first_event(&self, idx: usize, kind: EventKind) -> Option<Timestamp> {
        self.events_of(idx).iter().find(|e| e.kind == kind).map(|e| e.at)
    }

    /// Entities scheduled to arrive in `[as_of, as_of + 24h)`.
    pub fn cohort(&self, as_of: Timestamp) -> Vec<usize> {
        let arrival = |i: &usize| self.entities[*i].container.scheduled_arrival;
        let lo = self.arrival_order.partition_point(|i| arrival(i) < as_of);
        let hi = self.arrival_order.partition_point(|i| arrival(i) < as_of + days(1));
        self.arrival_order[lo..hi].to_vec()
    }

    pub fn first_arrival(&self) -> Option<Timestamp> {
        self.arrival_order
            .first()
            .map(|&i| self.entities[i].container.scheduled_arrival)
    }

    /// Copy of the store with every event at or after `t` removed.
    pub fn censored(&self, t: Timestamp) -> OntologyStore {
        let mut events = Vec::with_capacity(self.events.len());
        let mut offsets = Vec::with_capacity(self.offsets.len());
        offsets.push(0);
        for i in 0..self.entities.len() {
            events.extend(self.events_of(i).iter().filter(|e| e.at < t));
            offsets.push(events.len());
        }
        Self {
            entities: self.entities.clone(),
            by_id: self.by_id.clone(),
            events,
            offsets,
            arrival_order: self.arrival_order.clone(),
            horizon: self.horizon.min(t),
            vocab: self.vocab.clone(),
            consignee_names: self.consignee_names.clone(),
            quarantined: Vec::new(),
        }
    }

    /// Canonical consignee names indexed by component id.
    pub fn consignee_names(&self) -> &[String] {
        &self.consignee_names
    }

    pub fn is_linked(&self) -> bool {
        !self.entities.is_empty() && self.entities.iter().all(|e| e.consignee_id.is_some())
    }

    /// Attach consignee component ids; `component_of` maps raw consignee text.
    pub fn apply_consignees<F>(&mut self, canonical_names: Vec<String>, mut component_of: F)
    where
        F: FnMut(&str) -> Option<u32>,
    {
        for e in &mut self.entities {
            e.consignee_id = component_of(&e.container.consignee_raw);
        }
        self.consignee_names = canonical_names;
    }

    /// Attach HS chapter/section per entity from its merchandise description.
    pub fn apply_chapters<F>(&mut self, mut classify: F)
    where
        F: FnMut(&str) -> (Option<u8>, Option<u8>),
    {
        for e in &mut self.entities {
            let (chapter, section) = classify(&e.container.merchandise_description);
            e.hs_chapter = chapter;
            e.hs_section = section;
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), OntologyError> {
        let io = |source| OntologyError::Io {
            path: dir.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;

        let entities_path = dir.join("entities.csv");
        let mut w = csv_writer(&entities_path)?;
        let csv_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| OntologyError::Csv { path: path.clone(), source }
        };
        w.write_record(ENTITY_HEADER).map_err(csv_err(&entities_path))?;
        for e in &self.entities {
            let c = &e.container;
            let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([
                c.container_id.clone(),
                c.net_weight.to_string(),
                c.gross_weight.to_string(),
                self.vocab.dimension[c.dimension as usize].clone(),
                self.vocab.container_type[c.container_type as usize].clone(),
                self.vocab.cargo_type[c.cargo_type as usize].clone(),
                (c.hazardous as u8).to_string(),
                (c.liner_client as u8).to_string(),
                self.vocab.shipping_line[c.shipping_line as usize].clone(),
                self.vocab.route[c.route as usize].clone(),
                c.consignee_raw.clone(),
                c.merchandise_description.clone(),
                format_timestamp(c.scheduled_arrival),
                opt(e.consignee_id),
                opt(e.hs_chapter.map(u32::from)),
                opt(e.hs_section.map(u32::from)),
            ])
            .map_err(csv_err(&entities_path))?;
        }
        w.flush().map_err(io)?;

        let events_path = dir.join("events.csv");
        let mut w = csv_writer(&events_path)?;
        w.write_record(["container_id", "kind", "timestamp"])
            .map_err(csv_err(&events_path))?;
        for (i, e) in self.entities.iter().enumerate() {
            for ev in self.events_of(i) {
                w.write_record([e.id(), ev.kind.as_str(), &format_timestamp(ev.at)])
                    .map_err(csv_err(&events_path))?;
            }
        }
        w.flush().map_err(io)?;

        let q_path = dir.join("quarantine_events.csv");
        let mut w = csv_writer(&q_path)?;
        w.write_record(["container_id", "kind", "timestamp", "reason"])
            .map_err(csv_err(&q_path))?;
        for q in &self.quarantined {
            w.write_record([&q.row.container_id, &q.row.kind, &q.row.timestamp, &q.reason])
                .map_err(csv_err(&q_path))?;
        }
        w.flush().map_err(io)?;

        let manifest = StoreManifest {
            format: STORE_FORMAT.to_string(),
            entities: self.entities.len(),
            events: self.events.len(),
            quarantined_events: self.quarantined.len(),
            horizon: format_timestamp(self.horizon),
            entity_schema: schema_hash(&ENTITY_HEADER),
            event_schema: schema_hash(&["container_id", "kind", "timestamp"]),
            vocab: self.vocab.clone(),
            consignee_names: self.consignee_names.clone(),
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), json).map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, OntologyError> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path).map_err(|source| OntologyError::Io {
            path: manifest_path.clone(),
            source,
        })?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| OntologyError::Manifest(e.to_string()))?;
        if manifest.format != STORE_FORMAT {
            return Err(OntologyError::Manifest(format!("unsupported format {}", manifest.format)));
        }
        if manifest.entity_schema != schema_hash(&ENTITY_HEADER) {
            return Err(OntologyError::Manifest("entity schema hash mismatch".into()));
        }
        let vocab = manifest.vocab;
        let bad = |m: String| OntologyError::Manifest(m);

        let entities_path = dir.join("entities.csv");
        let mut r = csv_reader(&entities_path)?;
        let mut entities = Vec::with_capacity(manifest.entities);
        for rec in r.records() {
            let rec = rec.map_err(|source| OntologyError::Csv {
                path: entities_path.clone(),
                source,
            })?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let lookup = |list: &[String], v: &str| -> Result<u16, OntologyError> {
                list.binary_search_by(|x| x.as_str().cmp(v))
                    .map(|i| i as u16)
                    .map_err(|_| bad(format!("value `{v}` missing from vocabulary")))
            };
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
            let opt = |v: &str| -> Result<Option<u32>, OntologyError> {
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse().map(Some).map_err(|_| bad(format!("bad id `{v}`")))
                }
            };
            entities.push(OntologyEntity {
                container: CleanContainer {
                    container_id: f(0).to_string(),
                    net_weight: num(f(1))?,
                    gross_weight: num(f(2))?,
                    dimension: lookup(&vocab.dimension, f(3))?,
                    container_type: lookup(&vocab.container_type, f(4))?,
                    cargo_type: lookup(&vocab.cargo_type, f(5))?,
                    hazardous: f(6) == "1",
                    liner_client: f(7) == "1",
                    shipping_line: lookup(&vocab.shipping_line, f(8))?,
                    route: lookup(&vocab.route, f(9))?,
                    consignee_raw: f(10).to_string(),
                    merchandise_description: f(11).to_string(),
                    scheduled_arrival: parse_timestamp(f(12))
                        .ok_or_else(|| bad(format!("bad timestamp `{}`", f(12))))?,
                },
                consignee_id: opt(f(13))?,
                hs_chapter: opt(f(14))?.map(|v| v as u8),
                hs_section: opt(f(15))?.map(|v| v as u8),
            });
        }

        let by_id: HashMap<&str, usize> = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id(), i))
            .collect();
        let events_path = dir.join("events.csv");
        let mut r = csv_reader(&events_path)?;
        let mut grouped: Vec<Vec<Event>> = vec![Vec::new(); entities.len()];
        for rec in r.records() {
            let rec = rec.map_err(|source| OntologyError::Csv {
                path: events_path.clone(),
                source,
            })?;
            let idx = *by_id
                .get(rec.get(0).unwrap_or(""))
                .ok_or_else(|| bad("event for unknown container".into()))?;
            let kind = EventKind::parse(rec.get(1).unwrap_or(""))
                .ok_or_else(|| bad("unknown event kind".into()))?;
            let at = parse_timestamp(rec.get(2).unwrap_or(""))
                .ok_or_else(|| bad("bad event timestamp".into()))?;
            grouped[idx].push(Event { at, kind });
        }
        drop(by_id);
        let mut offsets = vec![0];
        let mut events = Vec::with_capacity(manifest.events);
        for mut evs in grouped {
            evs.sort();
            events.extend(evs);
            offsets.push(events.len());
        }

        let q_path = dir.join("quarantine_events.csv");
        let mut quarantined = Vec::new();
        if q_path.exists() {
            let mut r = csv_reader(&q_path)?;
            for rec in r.records() {
                let rec = rec.map_err(|source| OntologyError::Csv {
                    path: q_path.clone(),
                    source,
                })?;
                quarantined.push(QuarantinedEvent {
                    row: RawEventRow {
                        container_id: rec.get(0).unwrap_or("").into(),
                        kind: rec.get(1).unwrap_or("").into(),
                        timestamp: rec.get(2).unwrap_or("").into(),
                    },
                    reason: rec.get(3).unwrap_or("").into(),
                });
            }
        }
        let horizon = parse_timestamp(&manifest.horizon).ok_or_else(|| bad("bad horizon".into()))?;
        Ok(Self::assemble(
            entities,
            events,
            offsets,
            horizon,
            vocab,
            manifest.consignee_names,
            quarantined,
        ))
    }
}

const STORE_FORMAT: &str = "dwellcast-store/1";

const ENTITY_HEADER: [&str; 16] = [
    "container_id",
    "net_weight",
    "gross_weight",
    "dimension",
    "container_type",
    "cargo_type",
    "hazardous",
    "liner_client",
    "shipping_line",
    "route",
    "consignee_raw",
    "merchandise_description",
    "scheduled_arrival",
    "consignee_id",
    "hs_chapter",
    "hs_section",
];

#[derive(Debug, Serialize, Deserialize)]
struct StoreManifest {
    format: String,
    entities: usize,
    events: usize,
    quarantined_events: usize,
    horizon: String,
    entity_schema: String,
    event_schema: String,
    vocab: Vocabularies,
    consignee_names: Vec<String>,
}

fn schema_hash(header: &[&str]) -> String {
    hex::encode(Sha256::digest(header.join(",").as_bytes()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, OntologyError> {
    csv::Writer::from_path(path).map_err(|source| OntologyError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, OntologyError> {
    csv::Reader::from_path(path).map_err(|source| OntologyError::Csv {
        path: path.to_path_buf(),
        source,
    })
}
