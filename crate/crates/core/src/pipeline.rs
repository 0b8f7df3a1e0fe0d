//! Stage glue shared by the CLI, tests and the FFI layer.

use crate::hsclass::{build_index, classify, ChapterVectorIndex, Classification, CoverageReport, HsCatalog};
use crate::linkage::{resolve_consignees, ConsigneeResolution};
use crate::ontology::{build_ontology, clean, CleanOptions, OntologyError, OntologyStore, RawStore};
use crate::synthworld::RawTables;
use crate::time::Timestamp;

/// Resolves consignee text across the store and attaches component ids.
pub fn link_store(store: &mut OntologyStore, threshold: f64) -> ConsigneeResolution {
    let names: Vec<String> = store
        .entities()
        .iter()
        .map(|e| e.container.consignee_raw.clone())
        .collect();
    let resolution = resolve_consignees(&names, threshold);
    store.apply_consignees(resolution.canonical_names.clone(), |raw| resolution.component_of(raw));
    resolution
}

/// Classifies every merchandise description and attaches chapter/section.
pub fn classify_store(store: &mut OntologyStore, index: &ChapterVectorIndex, floor: f64) -> CoverageReport {
    let mut all: Vec<Classification> = Vec::with_capacity(store.len());
    store.apply_chapters(|desc| {
        let c = classify(desc, index, floor);
        all.push(c);
        (c.chapter, c.section)
    });
    CoverageReport::from_classifications(&all)
}

/// Raw tables to a linked, classified store observed up to `horizon`.
pub fn store_from_tables(
    tables: &RawTables,
    horizon: Timestamp,
    link_threshold: f64,
    hs_floor: f64,
) -> Result<OntologyStore, OntologyError> {
    let raw = RawStore {
        containers: tables.containers.clone(),
        events: tables.events.clone(),
    };
    let cleaned = clean(&raw, CleanOptions::default())?;
    let mut store = build_ontology(cleaned).with_horizon(horizon);
    link_store(&mut store, link_threshold);
    let index = build_index(&HsCatalog::bundled()).expect("bundled catalog builds");
    classify_store(&mut store, &index, hs_floor);
    Ok(store)
}
