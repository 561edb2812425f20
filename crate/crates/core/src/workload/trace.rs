//! JSON-lines trace files: one flat record per invocation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Catalog, Invocation};
use crate::error::{Error, Result};
use crate::sim::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub id: String,
    pub function: String,
    pub arrival_ms: u64,
    pub data_refs: Vec<String>,
    pub origin: String,
}

impl TraceRecord {
    pub fn from_invocation(inv: &Invocation, catalog: &Catalog) -> Self {
        TraceRecord {
            id: inv.id.clone(),
            function: catalog.function(inv.function).name.clone(),
            arrival_ms: inv.arrival.0,
            data_refs: inv
                .data_refs
                .iter()
                .map(|&o| catalog.object(o).id.clone())
                .collect(),
            origin: inv.origin.clone(),
        }
    }
}

pub fn write_trace<W: Write>(out: W, trace: &[Invocation], catalog: &Catalog) -> Result<()> {
    let mut out = BufWriter::new(out);
    for inv in trace {
        serde_json::to_writer(&mut out, &TraceRecord::from_invocation(inv, catalog))
            .map_err(|e| Error::Encode(e.to_string()))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io("writing trace", e))?;
    }
    out.flush().map_err(|e| Error::io("writing trace", e))
}

pub fn load_trace(path: &Path, catalog: &Catalog) -> Result<Vec<Invocation>> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_trace(BufReader::new(file), path, catalog)
}

/// Parses and validates records against `catalog`; the result is sorted by
/// arrival (stable, so equal arrivals keep file order). Blank lines are skipped.
pub fn read_trace<R: BufRead>(input: R, path: &Path, catalog: &Catalog) -> Result<Vec<Invocation>> {
    let mut trace = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            path: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        let function = catalog
            .function_id(&record.function)
            .map_err(|_| Error::TraceUnknownFunction {
                path: path.to_owned(),
                line: line_no,
                name: record.function.clone(),
            })?;
        let mut data_refs = Vec::with_capacity(record.data_refs.len());
        for name in &record.data_refs {
            let object = catalog.object_id(name).map_err(|_| Error::TraceUnknownObject {
                path: path.to_owned(),
                line: line_no,
                name: name.clone(),
            })?;
            if data_refs.contains(&object) {
                return Err(Error::MalformedRecord {
                    path: path.to_owned(),
                    line: line_no,
                    message: format!("data object {name:?} referenced twice"),
                });
            }
            data_refs.push(object);
        }
        trace.push(Invocation {
            id: record.id,
            function,
            data_refs,
            origin: record.origin,
            arrival: SimTime(record.arrival_ms),
        });
    }
    trace.sort_by_key(|inv| inv.arrival);
    Ok(trace)
}
