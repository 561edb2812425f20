use serde::{Deserialize, Serialize};

use super::ClusterView;
use crate::cluster::NodeId;
use crate::workload::Invocation;

/// Weights of the location-optimality score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub w_code: f64,
    pub w_data: f64,
    pub w_load: f64,
    /// Outstanding invocations at which the load term reaches zero.
    pub queue_cap: usize,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_code: 0.3,
            w_data: 0.5,
            w_load: 0.2,
            queue_cap: 16,
        }
    }
}

impl ScoreWeights {
    /// Warm-container-first matching: any idle warm container wins, load
    /// breaks ties, data is ignored.
    pub fn warm_first(w_load: f64, queue_cap: usize) -> Self {
        ScoreWeights {
            w_code: 1.0,
            w_data: 0.0,
            w_load,
            queue_cap,
        }
    }
}

/// `w_code·warm + w_data·locality + w_load·(1 − min(1, load/queue_cap))`.
pub fn locality_score(inv: &Invocation, node: NodeId, view: &ClusterView<'_>, w: &ScoreWeights) -> f64 {
    let code_warm = if view.warm_idle(node, inv.function) > 0 { 1.0 } else { 0.0 };
    let locality = view
        .locality_fraction(&inv.data_refs, node)
        .expect("invocation refs resolve against the catalog");
    let load = if w.queue_cap == 0 {
        1.0
    } else {
        (view.queue_len(node) as f64 / w.queue_cap as f64).min(1.0)
    };
    w.w_code * code_warm + w.w_data * locality + w.w_load * (1.0 - load)
}

/// Highest-scoring node, lowest id among (near-)ties.
pub fn best_node(inv: &Invocation, view: &ClusterView<'_>, w: &ScoreWeights) -> Option<(NodeId, f64)> {
    let mut best: Option<(NodeId, f64)> = None;
    for node in view.node_ids() {
        let score = locality_score(inv, node, view, w);
        match best {
            Some((_, top)) if score <= top + 1e-12 * top.abs() => {}
            _ => best = Some((node, score)),
        }
    }
    best
}
