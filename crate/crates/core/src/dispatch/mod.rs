//! Event dispatching strategies and the machinery they share: the read-only
//! cluster view, the location score, cluster keys, popularity-driven
//! replication and work stealing.

mod key;
mod replication;
mod score;
mod stealing;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use key::{stable_hash, ClusterKey};
pub use replication::{
    replication_tick, PopularityCounter, ReplicationAction, ReplicationOutcome, ReplicationParams,
};
pub use score::{best_node, locality_score, ScoreWeights};
pub use stealing::{steal_from, steal_work, StealOutcome};

use crate::cluster::{Cluster, NodeId};
use crate::error::{Error, Result};
use crate::workload::{FunctionId, Invocation, ObjectId};

/// What a strategy may look at when deciding: the cluster as of the decision
/// instant, read-only.
#[derive(Clone, Copy)]
pub struct ClusterView<'a> {
    cluster: &'a Cluster,
}

impl<'a> ClusterView<'a> {
    pub fn new(cluster: &'a Cluster) -> Self {
        ClusterView { cluster }
    }

    pub fn cluster(&self) -> &'a Cluster {
        self.cluster
    }

    pub fn node_count(&self) -> usize {
        self.cluster.node_count()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.cluster.node_count()).map(NodeId)
    }

    /// Invocations waiting or running on the node.
    pub fn queue_len(&self, node: NodeId) -> usize {
        self.cluster.nodes()[node.0].outstanding()
    }

    /// Invocations waiting in the node's run queue only.
    pub fn waiting(&self, node: NodeId) -> usize {
        self.cluster.nodes()[node.0].queue_len()
    }

    pub fn free_mem(&self, node: NodeId) -> u64 {
        self.cluster.nodes()[node.0].free_mem()
    }

    pub fn warm_idle(&self, node: NodeId, function: FunctionId) -> usize {
        self.cluster.nodes()[node.0].warm_idle(function)
    }

    pub fn has_object(&self, node: NodeId, object: ObjectId) -> bool {
        self.cluster.nodes()[node.0].has_object(object)
    }

    pub fn store_free(&self, node: NodeId) -> u64 {
        self.cluster.nodes()[node.0].store_free()
    }

    pub fn locality_fraction(&self, refs: &[ObjectId], node: NodeId) -> Result<f64> {
        self.cluster.locality_fraction(refs, node)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rationale {
    Baseline(&'static str),
    Score(f64),
    Cluster {
        key: ClusterKey,
        /// Set when the key was assigned by this decision.
        score: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDecision {
    pub node: NodeId,
    pub dispatch_latency_ms: u64,
    pub rationale: Rationale,
}

/// A dispatching policy. Implementations are deterministic functions of the
/// invocation, the view and their own private state.
pub trait Strategy: Send {
    fn kind(&self) -> StrategyKind;

    fn decide(&mut self, inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision>;

    /// Popularity counters feeding the replication daemon, for strategies
    /// that keep them.
    fn popularity(&mut self) -> Option<&mut PopularityCounter> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    RoundRobin,
    LeastLoaded,
    HashAffinity,
    McgrathQueues,
    DataAware,
    ProactiveCluster,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::RoundRobin,
        StrategyKind::LeastLoaded,
        StrategyKind::HashAffinity,
        StrategyKind::McgrathQueues,
        StrategyKind::DataAware,
        StrategyKind::ProactiveCluster,
    ];

    /// Registry names, plus the composable stealing flag.
    pub const REGISTRY: [&'static str; 7] = [
        "round_robin",
        "least_loaded",
        "hash_affinity",
        "mcgrath_queues",
        "data_aware",
        "proactive_cluster",
        "work_stealing",
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::RoundRobin => "round_robin",
            StrategyKind::LeastLoaded => "least_loaded",
            StrategyKind::HashAffinity => "hash_affinity",
            StrategyKind::McgrathQueues => "mcgrath_queues",
            StrategyKind::DataAware => "data_aware",
            StrategyKind::ProactiveCluster => "proactive_cluster",
        }
    }

    /// Default decision latency: 2ms for strategies that look up data
    /// locations, 1ms otherwise.
    pub fn default_dispatch_ms(self) -> u64 {
        match self {
            StrategyKind::DataAware | StrategyKind::ProactiveCluster => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy {s:?}; known strategies: {}",
                    StrategyKind::REGISTRY.join(", ")
                )
            })
    }
}

/// A base strategy with the optional work-stealing layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StrategyChoice {
    pub kind: StrategyKind,
    pub work_stealing: bool,
}

impl StrategyChoice {
    pub fn label(&self) -> String {
        if self.work_stealing {
            format!("{}+work_stealing", self.kind)
        } else {
            self.kind.to_string()
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = String;

    /// Accepts `name` or `name+work_stealing`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (base, work_stealing) = match s.strip_suffix("+work_stealing") {
            Some(base) => (base, true),
            None => (s, false),
        };
        if base == "work_stealing" {
            return Err(format!(
                "work_stealing is a flag layered on a base strategy (e.g. round_robin+work_stealing); known strategies: {}",
                StrategyKind::REGISTRY.join(", ")
            ));
        }
        Ok(StrategyChoice {
            kind: base.parse()?,
            work_stealing,
        })
    }
}

/// Tunables shared by every strategy; unused fields are ignored by
/// strategies that do not need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Overrides the per-strategy decision latency.
    pub dispatch_ms: Option<u64>,
    pub w_code: f64,
    pub w_data: f64,
    pub w_load: f64,
    pub queue_cap: usize,
    pub steal_poll_ms: u64,
    pub replication_period_ms: u64,
    pub replication_threshold: f64,
    pub replication_decay: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        let w = ScoreWeights::default();
        let r = ReplicationParams::default();
        StrategyParams {
            dispatch_ms: None,
            w_code: w.w_code,
            w_data: w.w_data,
            w_load: w.w_load,
            queue_cap: w.queue_cap,
            steal_poll_ms: 10,
            replication_period_ms: r.period_ms,
            replication_threshold: r.threshold,
            replication_decay: r.decay,
        }
    }
}

impl StrategyParams {
    pub fn weights(&self) -> ScoreWeights {
        ScoreWeights {
            w_code: self.w_code,
            w_data: self.w_data,
            w_load: self.w_load,
            queue_cap: self.queue_cap,
        }
    }

    pub fn replication(&self) -> ReplicationParams {
        ReplicationParams {
            period_ms: self.replication_period_ms,
            threshold: self.replication_threshold,
            decay: self.replication_decay,
        }
    }

    /// Decision latency added to every timeline dispatched by `kind`.
    pub fn dispatch_latency(&self, kind: StrategyKind) -> u64 {
        self.dispatch_ms.unwrap_or_else(|| kind.default_dispatch_ms())
    }
}

/// Instantiates a fresh strategy with its own private state.
pub fn build_strategy(kind: StrategyKind, params: &StrategyParams, objects: usize) -> Box<dyn Strategy> {
    let latency = params.dispatch_latency(kind);
    match kind {
        StrategyKind::RoundRobin => Box::new(RoundRobin { cursor: 0, latency }),
        StrategyKind::LeastLoaded => Box::new(LeastLoaded { latency }),
        StrategyKind::HashAffinity => Box::new(HashAffinity { latency }),
        StrategyKind::McgrathQueues => Box::new(ScoreArgmax {
            kind,
            weights: ScoreWeights::warm_first(params.w_load, params.queue_cap),
            latency,
        }),
        StrategyKind::DataAware => Box::new(ScoreArgmax {
            kind,
            weights: params.weights(),
            latency,
        }),
        StrategyKind::ProactiveCluster => Box::new(ProactiveCluster {
            weights: params.weights(),
            latency,
            assignments: HashMap::new(),
            counters: PopularityCounter::new(objects),
        }),
    }
}

fn require_nodes(view: &ClusterView<'_>) -> Result<()> {
    if view.node_count() == 0 {
        Err(Error::NoNodes)
    } else {
        Ok(())
    }
}

/// Cycles through nodes in id order.
#[derive(Debug, Clone)]
pub struct RoundRobin {
    cursor: usize,
    latency: u64,
}

impl Strategy for RoundRobin {
    fn kind(&self) -> StrategyKind {
        StrategyKind::RoundRobin
    }

    fn decide(&mut self, _inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision> {
        require_nodes(view)?;
        let node = NodeId(self.cursor % view.node_count());
        self.cursor = (self.cursor + 1) % view.node_count();
        Ok(DispatchDecision {
            node,
            dispatch_latency_ms: self.latency,
            rationale: Rationale::Baseline("round_robin"),
        })
    }
}

/// Fewest outstanding invocations, lowest id on ties.
#[derive(Debug, Clone)]
pub struct LeastLoaded {
    latency: u64,
}

impl Strategy for LeastLoaded {
    fn kind(&self) -> StrategyKind {
        StrategyKind::LeastLoaded
    }

    fn decide(&mut self, _inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision> {
        require_nodes(view)?;
        let node = view
            .node_ids()
            .min_by_key(|&n| (view.queue_len(n), n))
            .expect("at least one node");
        Ok(DispatchDecision {
            node,
            dispatch_latency_ms: self.latency,
            rationale: Rationale::Baseline("least_loaded"),
        })
    }
}

/// `stable_hash(function name) mod node count`.
#[derive(Debug, Clone)]
pub struct HashAffinity {
    latency: u64,
}

impl Strategy for HashAffinity {
    fn kind(&self) -> StrategyKind {
        StrategyKind::HashAffinity
    }

    fn decide(&mut self, inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision> {
        require_nodes(view)?;
        let name = &view.cluster().catalog().function(inv.function).name;
        let node = NodeId((stable_hash(name.as_bytes()) % view.node_count() as u64) as usize);
        Ok(DispatchDecision {
            node,
            dispatch_latency_ms: self.latency,
            rationale: Rationale::Baseline("hash_affinity"),
        })
    }
}

/// Argmax of the location score; backs both `data_aware` and the warm-first
/// `mcgrath_queues` weighting.
#[derive(Debug, Clone)]
pub struct ScoreArgmax {
    kind: StrategyKind,
    weights: ScoreWeights,
    latency: u64,
}

impl Strategy for ScoreArgmax {
    fn kind(&self) -> StrategyKind {
        self.kind
    }

    fn decide(&mut self, inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision> {
        let (node, score) = best_node(inv, view, &self.weights).ok_or(Error::NoNodes)?;
        Ok(DispatchDecision {
            node,
            dispatch_latency_ms: self.latency,
            rationale: Rationale::Score(score),
        })
    }
}

/// Sticky cluster-key assignment: the first event of a key goes to the best
/// scoring node, every later event with that key follows it.
#[derive(Debug, Clone)]
pub struct ProactiveCluster {
    weights: ScoreWeights,
    latency: u64,
    assignments: HashMap<ClusterKey, NodeId>,
    counters: PopularityCounter,
}

impl ProactiveCluster {
    pub fn assignments(&self) -> &HashMap<ClusterKey, NodeId> {
        &self.assignments
    }
}

impl Strategy for ProactiveCluster {
    fn kind(&self) -> StrategyKind {
        StrategyKind::ProactiveCluster
    }

    fn decide(&mut self, inv: &Invocation, view: &ClusterView<'_>) -> Result<DispatchDecision> {
        require_nodes(view)?;
        let key = ClusterKey::of(inv, view.cluster().catalog());
        let (node, score) = match self.assignments.get(&key) {
            Some(&node) if node.0 < view.node_count() => (node, None),
            _ => {
                let (node, score) = best_node(inv, view, &self.weights).ok_or(Error::NoNodes)?;
                self.assignments.insert(key.clone(), node);
                (node, Some(score))
            }
        };
        for &object in &inv.data_refs {
            self.counters.record(object, node);
        }
        Ok(DispatchDecision {
            node,
            dispatch_latency_ms: self.latency,
            rationale: Rationale::Cluster { key, score },
        })
    }

    fn popularity(&mut self) -> Option<&mut PopularityCounter> {
        Some(&mut self.counters)
    }
}

#[cfg(test)]
mod tests;
