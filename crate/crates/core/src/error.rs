use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::Diagnostic;
use crate::sim::SimTime;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot schedule an occurrence at {at}, which is in the past (now {now})")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("node {node} has {free_mb}MB of free store, object {object} needs {needed_mb}MB")]
    CapacityExceeded {
        node: usize,
        object: String,
        needed_mb: u64,
        free_mb: u64,
    },

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("unknown data object {0:?}")]
    UnknownObject(String),

    #[error("unknown function {0:?}")]
    UnknownFunction(String),

    #[error("cluster has no nodes")]
    NoNodes,

    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),

    #[error("{path}:{line}: malformed trace record: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: unknown function {name:?}")]
    TraceUnknownFunction {
        path: PathBuf,
        line: usize,
        name: String,
    },

    #[error("{path}:{line}: unknown data object {name:?}")]
    TraceUnknownObject {
        path: PathBuf,
        line: usize,
        name: String,
    },

    #[error("invalid configuration:\n{}", render_diagnostics(.0))]
    ConfigInvalid(Vec<Diagnostic>),

    #[error("quality is undefined for task {0}: it failed or took no time")]
    QualityUndefined(String),

    #[error("simulation invariant violated: {0}")]
    Invariant(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("report encoding failed: {0}")]
    Encode(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}
