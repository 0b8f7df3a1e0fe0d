use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LineDiagnostic, OntologyError};

pub const CONTAINER_HEADER: [&str; 13] = [
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
    "consignee",
    "merchandise_description",
    "scheduled_arrival",
];

pub const EVENT_HEADER: [&str; 3] = ["container_id", "kind", "timestamp"];

/// A container row exactly as it appears in the source extract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawContainerRow {
    pub container_id: String,
    pub net_weight: String,
    pub gross_weight: String,
    pub dimension: String,
    pub container_type: String,
    pub cargo_type: String,
    pub hazardous: String,
    pub liner_client: String,
    pub shipping_line: String,
    pub route: String,
    pub consignee: String,
    pub merchandise_description: String,
    pub scheduled_arrival: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEventRow {
    pub container_id: String,
    pub kind: String,
    pub timestamp: String,
}

/// Verbatim copy of the two source tables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawStore {
    pub containers: Vec<RawContainerRow>,
    pub events: Vec<RawEventRow>,
}

impl RawStore {
    pub fn row_counts(&self) -> (usize, usize) {
        (self.containers.len(), self.events.len())
    }
}

pub fn ingest_raw(container_file: &Path, event_file: &Path) -> Result<RawStore, OntologyError> {
    Ok(RawStore {
        containers: read_table(container_file, &CONTAINER_HEADER)?,
        events: read_table(event_file, &EVENT_HEADER)?,
    })
}

fn read_table<T: for<'de> Deserialize<'de>>(
    path: &Path,
    header: &[&str],
) -> Result<Vec<T>, OntologyError> {
    let file = File::open(path).map_err(|source| OntologyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(file);
    let csv_err = |source| OntologyError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let found = reader.headers().map_err(csv_err)?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(OntologyError::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                bad.push(LineDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            bad.push(LineDiagnostic {
                line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
            continue;
        }
        match record.deserialize(Some(&found)) {
            Ok(row) => rows.push(row),
            Err(e) => bad.push(LineDiagnostic {
                line,
                message: e.to_string(),
            }),
        }
    }
    if bad.is_empty() {
        Ok(rows)
    } else {
        Err(OntologyError::MalformedRows {
            path: path.to_path_buf(),
            lines: bad,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    const HEADER: &str = "container_id,net_weight,gross_weight,dimension,container_type,cargo_type,hazardous,liner_client,shipping_line,route,consignee,merchandise_description,scheduled_arrival\n";

    #[test]
    fn empty_file_with_header_is_vacuous() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", HEADER);
        let e = write(dir.path(), "e.csv", "container_id,kind,timestamp\n");
        let raw = ingest_raw(&c, &e).unwrap();
        assert_eq!(raw.row_counts(), (0, 0));
    }

    #[test]
    fn malformed_rows_are_reported_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let good = "C1,1000,3000,40,DRY,GENERAL,N,N,L1,R1,ACME,TOYS,2022-01-01T00:00:00\n";
        let body = format!("{HEADER}{good}C2,1\n{good}C3,1,2\nC4\n");
        let c = write(dir.path(), "c.csv", &body);
        let e = write(dir.path(), "e.csv", "container_id,kind,timestamp\n");
        match ingest_raw(&c, &e) {
            Err(OntologyError::MalformedRows { lines, .. }) => {
                let nums: Vec<u64> = lines.iter().map(|d| d.line).collect();
                assert_eq!(nums, vec![3, 5, 6]);
            }
            other => panic!("expected malformed rows, got {other:?}"),
        }
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.csv", "id,weight\n");
        let e = write(dir.path(), "e.csv", "container_id,kind,timestamp\n");
        assert!(matches!(ingest_raw(&c, &e), Err(OntologyError::Header { .. })));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            ingest_raw(&missing, &missing),
            Err(OntologyError::Io { .. })
        ));
    }

    #[test]
    fn rows_are_preserved_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let row = "C1,\"12,500\",x, 40ft ,dry,General,yes,0,L1,R1,  Acme  sa,\"HS 8471.30, LAPTOPS\",2022-01-01 03:00:00\n";
        let c = write(dir.path(), "c.csv", &format!("{HEADER}{row}"));
        let e = write(dir.path(), "e.csv", "container_id,kind,timestamp\nC1,Arrival,2022-01-01T03:00:00\n");
        let raw = ingest_raw(&c, &e).unwrap();
        assert_eq!(raw.containers[0].net_weight, "12,500");
        assert_eq!(raw.containers[0].dimension, " 40ft ");
        assert_eq!(raw.containers[0].consignee, "  Acme  sa");
        assert_eq!(raw.events[0].kind, "Arrival");
    }
}
