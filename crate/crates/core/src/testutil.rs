//! Hand-built stores for unit tests.

use crate::ontology::{build_ontology, CleanContainer, CleanEvent, CleanStore, EventKind, OntologyStore, Vocabularies};
use crate::time::{parse_timestamp, Timestamp};

pub(crate) struct Spec {
    pub id: &'static str,
    pub consignee: &'static str,
    pub arrival: &'static str,
    pub service: Option<&'static str>,
    pub exit: Option<&'static str>,
}

pub(crate) fn ts(s: &str) -> Timestamp {
    parse_timestamp(s).unwrap()
}

pub(crate) fn fixture(rows: &[Spec]) -> OntologyStore {
    let mut containers = Vec::new();
    let mut events = Vec::new();
    for r in rows {
        containers.push(CleanContainer {
            container_id: r.id.into(),
            net_weight: 1000.0,
            gross_weight: 3000.0,
            dimension: 0,
            container_type: 0,
            cargo_type: 0,
            hazardous: false,
            liner_client: false,
            shipping_line: 0,
            route: 0,
            consignee_raw: r.consignee.into(),
            merchandise_description: "FISH".into(),
            scheduled_arrival: ts(r.arrival),
        });
        let mut push = |kind, at: &str| {
            events.push(CleanEvent {
                container_id: r.id.into(),
                kind,
                at: ts(at),
            })
        };
        push(EventKind::Arrival, r.arrival);
        if let Some(s) = r.service {
            push(EventKind::Service, s);
        }
        if let Some(x) = r.exit {
            push(EventKind::Exit, x);
        }
    }
    let one = |s: &str| vec![s.to_string()];
    let mut store = build_ontology(CleanStore {
        containers,
        events,
        vocab: Vocabularies {
            dimension: one("40"),
            container_type: one("DRY"),
            cargo_type: one("GENERAL"),
            shipping_line: one("L1"),
            route: one("R1"),
        },
        ..Default::default()
    });
    crate::pipeline::link_store(&mut store, 0.8);
    store.apply_chapters(|_| (Some(3), Some(1)));
    store
}

pub(crate) fn acme_fixture() -> OntologyStore {
    let c = |id, consignee, arrival, service, exit| Spec { id, consignee, arrival, service, exit };
    fixture(&[
        c("A1", "ACME", "2022-01-01T08:00:00", Some("2022-01-02T08:00:00"), Some("2022-01-04T08:00:00")),
        c("A2", "ACME", "2022-01-03T08:00:00", Some("2022-01-04T08:00:00"), Some("2022-01-05T20:00:00")),
        c("A3", "ACME", "2022-01-05T08:00:00", Some("2022-01-06T08:00:00"), None),
        c("A4", "ACME", "2022-01-06T08:00:00", None, None),
        c("B1", "BOLT", "2022-01-04T08:00:00", None, Some("2022-01-06T08:00:00")),
        c("A5", "ACME", "2022-01-10T10:00:00", None, None),
        c("Z1", "ZETA", "2022-01-10T11:00:00", None, None),
    ])
}

