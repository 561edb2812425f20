//! Scenario configuration: a TOML file, optionally patched with dotted
//! `key=value` overrides, validated into diagnostics that name the offending
//! key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterConfig;
use crate::dispatch::{StrategyChoice, StrategyParams};
use crate::metrics::Format;
use crate::sim::RandomSource;
use crate::workload::{SizeDistribution, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

/// One configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted config path, e.g. `workload.objects.popularity`.
    pub key: String,
    pub message: String,
}

impl Diagnostic {
    pub fn error(key: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn warning(key: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{level}: {}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    /// A single strategy; `names` takes precedence when non-empty.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub names: Vec<String>,
    /// Layers work stealing on every listed strategy.
    #[serde(default)]
    pub work_stealing: bool,
    #[serde(default)]
    pub params: StrategyParams,
}

impl StrategyConfig {
    pub fn choices(&self) -> Result<Vec<StrategyChoice>, Vec<Diagnostic>> {
        let (key, raw): (&str, Vec<&String>) = if self.names.is_empty() {
            ("strategy.name", self.name.iter().collect())
        } else {
            ("strategy.names", self.names.iter().collect())
        };
        if raw.is_empty() {
            return Err(vec![Diagnostic::error(
                "strategy.name",
                format!(
                    "no strategy selected; known strategies: {}",
                    crate::dispatch::StrategyKind::REGISTRY.join(", ")
                ),
            )]);
        }
        let mut out = Vec::new();
        let mut diags = Vec::new();
        for (i, name) in raw.into_iter().enumerate() {
            let k = if key == "strategy.names" {
                format!("{key}[{i}]")
            } else {
                key.to_owned()
            };
            match name.parse::<StrategyChoice>() {
                Ok(mut c) => {
                    c.work_stealing |= self.work_stealing;
                    out.push(c);
                }
                Err(msg) => diags.push(Diagnostic::error(k, msg)),
            }
        }
        if diags.is_empty() {
            Ok(out)
        } else {
            Err(diags)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub name: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            name: "report".into(),
            formats: vec![Format::Csv],
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub cluster: ClusterConfig,
    pub workload: WorkloadSpec,
    pub strategy: StrategyConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub horizon_ms: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Applies a dotted `key=value` override to a TOML tree. The value is read
/// as a TOML literal, falling back to a bare string.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), Diagnostic> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Diagnostic::error(assignment, "override must have the form key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Diagnostic::error(path, "empty key segment in override"));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = root;
    for (i, k) in parents.iter().enumerate() {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Diagnostic::error(keys[..=i].join("."), "override descends into a non-table value")
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl Scenario {
    /// Parses TOML text, applies overrides and fills inherited values. Returns
    /// parse-level diagnostics; semantic checks live in [`Scenario::diagnostics`].
    pub fn parse(text: &str, overrides: &[String]) -> Result<Scenario, Vec<Diagnostic>> {
        let mut table: toml::Table = toml::from_str(text)
            .map_err(|e| vec![Diagnostic::error("<file>", e.message().to_owned())])?;
        for o in overrides {
            apply_override(&mut table, o).map_err(|d| vec![d])?;
        }
        let de = toml::Value::Table(table);
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            vec![Diagnostic::error(
                if key == "." { "<root>".to_owned() } else { key },
                e.into_inner().to_string().trim().to_owned(),
            )]
        })?;
        if scenario.workload.horizon_ms == 0 {
            scenario.workload.horizon_ms = scenario.horizon_ms;
        }
        Ok(scenario)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Scenario, Vec<Diagnostic>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![Diagnostic::error(
                "<file>",
                format!("cannot read {}: {e}", path.display()),
            )]
        })?;
        let mut scenario = Scenario::parse(&text, overrides)?;
        // trace paths are relative to the config file
        if let (Some(trace), Some(dir)) = (scenario.workload.trace.as_mut(), path.parent()) {
            if trace.is_relative() {
                *trace = dir.join(&*trace);
            }
        }
        Ok(scenario)
    }

    /// All violations, errors and warnings, without running anything.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let c = &self.cluster;
        if self.horizon_ms == 0 {
            out.push(Diagnostic::error("horizon_ms", "horizon must be positive"));
        }
        if self.seeds.is_empty() {
            out.push(Diagnostic::error("seeds", "at least one seed is required"));
        }
        if c.nodes == 0 {
            out.push(Diagnostic::error("cluster.nodes", "cluster needs at least one node"));
        }
        if c.mem_capacity == 0 {
            out.push(Diagnostic::error("cluster.mem_capacity", "memory capacity must be positive"));
        }
        if c.network.bandwidth_mb_per_s == 0 {
            out.push(Diagnostic::error(
                "cluster.network.bandwidth_mb_per_s",
                "bandwidth must be positive",
            ));
        }
        if c.flavors.is_empty() {
            out.push(Diagnostic::error("cluster.flavors", "flavor set is empty"));
        }
        if c.max_execution_ms == 0 {
            out.push(Diagnostic::error("cluster.max_execution_ms", "execution cap must be positive"));
        }
        if c.billing_granularity_ms == 0 {
            out.push(Diagnostic::error(
                "cluster.billing_granularity_ms",
                "billing granularity must be positive",
            ));
        }

        out.extend(self.workload.diagnostics());
        for (i, f) in self.workload.functions.iter().enumerate() {
            let key = |field: &str| format!("workload.functions[{i}].{field}");
            if !c.flavors.contains(&f.flavor) {
                out.push(Diagnostic::error(
                    key("flavor"),
                    format!("{}MB is not in the flavor set {:?}", f.flavor, c.flavors),
                ));
            } else if f.flavor > c.mem_capacity {
                out.push(Diagnostic::error(
                    key("flavor"),
                    format!("{}MB exceeds node memory {}MB", f.flavor, c.mem_capacity),
                ));
            }
            if f.compute_ms > c.max_execution_ms {
                out.push(Diagnostic::warning(
                    key("compute_ms"),
                    format!(
                        "{}ms exceeds the execution cap of {}ms; every invocation will fail",
                        f.compute_ms, c.max_execution_ms
                    ),
                ));
            }
        }
        let objects = &self.workload.objects;
        if objects.count > 0 {
            let largest = match objects.size {
                SizeDistribution::Fixed(mb) => mb,
                SizeDistribution::Uniform { max, .. } => max,
            };
            if c.store_capacity < largest {
                out.push(Diagnostic::warning(
                    "cluster.store_capacity",
                    format!(
                        "{}MB store is smaller than the largest object ({largest}MB); placement will fail",
                        c.store_capacity
                    ),
                ));
            }
            if c.nodes > 0 {
                if objects.replicas > c.nodes {
                    out.push(Diagnostic::error(
                        "workload.objects.replicas",
                        format!("{} replicas but only {} nodes", objects.replicas, c.nodes),
                    ));
                }
                let per_node = (objects.count * objects.replicas).div_ceil(c.nodes) as u64;
                if per_node * largest > c.store_capacity && c.store_capacity >= largest {
                    out.push(Diagnostic::warning(
                        "cluster.store_capacity",
                        format!(
                            "origin replicas may need up to {}MB per node but the store holds {}MB",
                            per_node * largest,
                            c.store_capacity
                        ),
                    ));
                }
            }
        }
        if let Some(trace) = &self.workload.trace {
            if !trace.exists() {
                out.push(Diagnostic::error(
                    "workload.trace",
                    format!("trace file {} does not exist", trace.display()),
                ));
            }
        }

        if let Err(diags) = self.strategy.choices() {
            out.extend(diags);
        }
        let p = &self.strategy.params;
        for (k, v) in [("w_code", p.w_code), ("w_data", p.w_data), ("w_load", p.w_load)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(Diagnostic::error(format!("strategy.params.{k}"), format!("weight must be >= 0, got {v}")));
            }
        }
        if !(p.replication_decay > 0.0 && p.replication_decay <= 1.0) {
            out.push(Diagnostic::error(
                "strategy.params.replication_decay",
                format!("decay must be in (0, 1], got {}", p.replication_decay),
            ));
        }
        if !(p.replication_threshold >= 0.0) {
            out.push(Diagnostic::error(
                "strategy.params.replication_threshold",
                "threshold must be non-negative",
            ));
        }
        if p.replication_period_ms == 0 {
            out.push(Diagnostic::error("strategy.params.replication_period_ms", "period must be positive"));
        }
        if p.queue_cap == 0 {
            out.push(Diagnostic::error("strategy.params.queue_cap", "queue cap must be positive"));
        }
        if p.steal_poll_ms == 0 {
            out.push(Diagnostic::error("strategy.params.steal_poll_ms", "poll interval must be positive"));
        }
        if self.output.formats.is_empty() {
            out.push(Diagnostic::error("output.formats", "at least one report format is required"));
        }
        out
    }

    pub fn errors(&self) -> Vec<Diagnostic> {
        self.diagnostics().into_iter().filter(Diagnostic::is_error).collect()
    }

    /// Every simulation constant as sorted `key = value` pairs, for report
    /// preambles.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let Ok(toml::Value::Table(t)) = toml::Value::try_from(self) {
            flatten("", &toml::Value::Table(t), &mut out);
        }
        out.retain(|(k, _)| !k.starts_with("output."));
        out.push(("rng".into(), RandomSource::ALGORITHM.into()));
        out.sort();
        out
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        toml::Value::Array(items) if items.iter().any(|v| v.is_table()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        other => out.push((prefix.to_owned(), other.to_string())),
    }
}

#[cfg(test)]
mod tests;
