//! Staged data store: raw rows as ingested, typed clean rows, and the
//! entity/event model queried by everything downstream.

mod clean;
mod raw;
mod store;

pub use clean::{clean, CleanContainer, CleanEvent, CleanOptions, CleanStore, QuarantinedRow, Vocabularies};
pub use raw::{ingest_raw, RawContainerRow, RawEventRow, RawStore, CONTAINER_HEADER, EVENT_HEADER};
pub use store::{build_ontology, Event, OntologyEntity, OntologyStore, QuarantinedEvent};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrival,
    Service,
    Exit,
    YardMove,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::Arrival,
        EventKind::Service,
        EventKind::Exit,
        EventKind::YardMove,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Service => "service",
            EventKind::Exit => "exit",
            EventKind::YardMove => "yard_move",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "arrival" => Some(EventKind::Arrival),
            "service" => Some(EventKind::Service),
            "exit" => Some(EventKind::Exit),
            "yard_move" | "yardmove" | "move" => Some(EventKind::YardMove),
            _ => None,
        }
    }
}

/// One malformed line found while ingesting a delimited file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum OntologyError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header mismatch, expected `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}: {} malformed row(s) at line(s) {}", .lines.len(), format_lines(.lines))]
    MalformedRows {
        path: PathBuf,
        lines: Vec<LineDiagnostic>,
    },
    #[error("schema mismatch: {rejected} of {total} container rows rejected (limit {limit:.0}%)", limit = .max_fraction * 100.0)]
    SchemaMismatch {
        rejected: usize,
        total: usize,
        max_fraction: f64,
    },
    #[error("unknown container `{0}`")]
    UnknownContainer(String),
    #[error("corrupt store manifest: {0}")]
    Manifest(String),
}

fn format_lines(lines: &[LineDiagnostic]) -> String {
    lines
        .iter()
        .map(|d| d.line.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
