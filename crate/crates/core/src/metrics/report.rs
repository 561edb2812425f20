//! Machine-readable run reports: CSV with a `#`-prefixed metadata preamble,
//! or JSON with the same column names.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A numeric report cell. Integral values are written without a fractional
/// part so count columns read as integers.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Metric(pub f64);

impl Metric {
    pub fn count(n: u64) -> Self {
        Metric(n as f64)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const EXACT_INT_LIMIT: f64 = 9_007_199_254_740_992.0;

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() && v.fract() == 0.0 && v.abs() < EXACT_INT_LIMIT {
            s.serialize_i64(v as i64)
        } else {
            s.serialize_f64(v)
        }
    }
}

struct NumberVisitor;

impl Visitor<'_> for NumberVisitor {
    type Value = f64;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a number")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<f64, E> {
        Ok(v)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<f64, E> {
        Ok(v as f64)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<f64, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(NumberVisitor).map(Metric)
    }
}

/// The seed column: a seed for detail rows, `mean` for per-strategy aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedLabel {
    Seed(u64),
    Mean,
}

impl fmt::Display for SeedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeedLabel::Seed(s) => write!(f, "{s}"),
            SeedLabel::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for SeedLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "mean" {
            return Ok(SeedLabel::Mean);
        }
        s.parse()
            .map(SeedLabel::Seed)
            .map_err(|_| format!("seed must be an integer or \"mean\", got {s:?}"))
    }
}

impl Serialize for SeedLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SeedLabel::Seed(seed) => s.serialize_u64(*seed),
            SeedLabel::Mean => s.serialize_str("mean"),
        }
    }
}

struct SeedVisitor;

impl Visitor<'_> for SeedVisitor {
    type Value = SeedLabel;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a seed or \"mean\"")
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<SeedLabel, E> {
        Ok(SeedLabel::Seed(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<SeedLabel, E> {
        u64::try_from(v).map(SeedLabel::Seed).map_err(E::custom)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<SeedLabel, E> {
        v.parse().map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for SeedLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(SeedVisitor)
    }
}

/// One report line. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub seed: SeedLabel,
    pub tasks: Metric,
    pub failures: Metric,
    pub mean_actual_ms: Metric,
    pub median_actual_ms: Metric,
    pub p95_actual_ms: Metric,
    pub mean_quality: Metric,
    pub efficiency: Metric,
    pub utilization: Metric,
    pub gb_seconds: Metric,
    pub invocations_billed: Metric,
    pub dispatch_ms_total: Metric,
    pub queue_ms_total: Metric,
    pub boot_ms_total: Metric,
    pub code_fetch_ms_total: Metric,
    pub data_fetch_ms_total: Metric,
    pub compute_ms_total: Metric,
    pub write_back_ms_total: Metric,
    pub replications: Metric,
    pub steals: Metric,
}

impl ReportRow {
    pub const COLUMNS: [&'static str; 21] = [
        "strategy",
        "seed",
        "tasks",
        "failures",
        "mean_actual_ms",
        "median_actual_ms",
        "p95_actual_ms",
        "mean_quality",
        "efficiency",
        "utilization",
        "gb_seconds",
        "invocations_billed",
        "dispatch_ms_total",
        "queue_ms_total",
        "boot_ms_total",
        "code_fetch_ms_total",
        "data_fetch_ms_total",
        "compute_ms_total",
        "write_back_ms_total",
        "replications",
        "steals",
    ];

    fn metrics(&self) -> [Metric; 19] {
        [
            self.tasks,
            self.failures,
            self.mean_actual_ms,
            self.median_actual_ms,
            self.p95_actual_ms,
            self.mean_quality,
            self.efficiency,
            self.utilization,
            self.gb_seconds,
            self.invocations_billed,
            self.dispatch_ms_total,
            self.queue_ms_total,
            self.boot_ms_total,
            self.code_fetch_ms_total,
            self.data_fetch_ms_total,
            self.compute_ms_total,
            self.write_back_ms_total,
            self.replications,
            self.steals,
        ]
    }

    /// Column-wise mean of `rows`, labelled with `strategy` and seed `mean`.
    pub fn mean_of(strategy: &str, rows: &[&ReportRow]) -> ReportRow {
        let n = rows.len().max(1) as f64;
        let mut sums = [0f64; 19];
        for r in rows {
            for (s, m) in sums.iter_mut().zip(r.metrics()) {
                *s += m.0;
            }
        }
        let m = sums.map(|s| Metric(s / n));
        ReportRow {
            strategy: strategy.to_owned(),
            seed: SeedLabel::Mean,
            tasks: m[0],
            failures: m[1],
            mean_actual_ms: m[2],
            median_actual_ms: m[3],
            p95_actual_ms: m[4],
            mean_quality: m[5],
            efficiency: m[6],
            utilization: m[7],
            gb_seconds: m[8],
            invocations_billed: m[9],
            dispatch_ms_total: m[10],
            queue_ms_total: m[11],
            boot_ms_total: m[12],
            code_fetch_ms_total: m[13],
            data_fetch_ms_total: m[14],
            compute_ms_total: m[15],
            write_back_ms_total: m[16],
            replications: m[17],
            steals: m[18],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown report format {other:?} (expected csv or json)")),
        }
    }
}

/// Report rows plus the constants that produced them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    /// `key = value` pairs echoed ahead of the rows, in order.
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    metadata: serde_json::Map<String, serde_json::Value>,
    rows: &'a [ReportRow],
}

impl Report {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let io = |e| Error::io("writing csv report", e);
        for (k, v) in &self.metadata {
            writeln!(out, "# {k} = {v}").map_err(io)?;
        }
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(ReportRow::COLUMNS)
            .map_err(|e| Error::Encode(e.to_string()))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Encode(e.to_string()))?;
        }
        w.flush().map_err(io)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let mut out = BufWriter::new(out);
        let metadata = self
            .metadata
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        let doc = JsonReport {
            metadata,
            rows: &self.rows,
        };
        serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| Error::Encode(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::io("writing json report", e))?;
        out.flush().map_err(|e| Error::io("writing json report", e))
    }
}

/// Writes `report` to `path` in `format`.
pub fn emit_report(report: &Report, format: Format, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    match format {
        Format::Csv => report.write_csv(file),
        Format::Json => report.write_json(file),
    }
}

/// Parses the rows of a CSV report, skipping the metadata preamble.
pub fn read_csv_rows<R: BufRead>(input: R) -> Result<Vec<ReportRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| Error::Encode(e.to_string()))
}
