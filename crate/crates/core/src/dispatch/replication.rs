//! Periodic replication of popular data toward the nodes that demand it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{Cluster, NodeId, Placement};
use crate::error::Error;
use crate::sim::SimTime;
use crate::workload::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationParams {
    pub period_ms: u64,
    pub threshold: f64,
    /// Multiplier applied to every decayed count after each tick.
    pub decay: f64,
}

impl Default for ReplicationParams {
    fn default() -> Self {
        ReplicationParams {
            period_ms: 1000,
            threshold: 10.0,
            decay: 0.5,
        }
    }
}

/// Access counts driving replication.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopularityCounter {
    decayed: Vec<f64>,
    demand: HashMap<(ObjectId, NodeId), u64>,
}

impl PopularityCounter {
    pub fn new(objects: usize) -> Self {
        PopularityCounter {
            decayed: vec![0.0; objects],
            demand: HashMap::new(),
        }
    }

    pub fn record(&mut self, object: ObjectId, node: NodeId) {
        self.decayed[object.index()] += 1.0;
        *self.demand.entry((object, node)).or_default() += 1;
    }

    pub fn count(&self, object: ObjectId) -> f64 {
        self.decayed[object.index()]
    }

    pub fn demand(&self, object: ObjectId, node: NodeId) -> u64 {
        self.demand.get(&(object, node)).copied().unwrap_or(0)
    }

    pub fn set_count(&mut self, object: ObjectId, count: f64) {
        self.decayed[object.index()] = count;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplicationOutcome {
    Placed,
    /// The target's store had no room; nothing was evicted.
    SkippedCapacity { free_mb: u64, needed_mb: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationAction {
    pub at: SimTime,
    pub object: ObjectId,
    pub node: NodeId,
    pub count: f64,
    pub outcome: ReplicationOutcome,
}

/// One replication round: every object whose decayed count reached the
/// threshold is copied to the node with the highest demand among those
/// without a replica (lowest id on ties, zero demand allowed). Afterwards all
/// counts are decayed and per-node demand restarts from zero.
pub fn replication_tick(
    now: SimTime,
    counters: &mut PopularityCounter,
    cluster: &mut Cluster,
    params: &ReplicationParams,
) -> Vec<ReplicationAction> {
    let mut actions = Vec::new();
    for idx in 0..counters.decayed.len() {
        let object = ObjectId(idx as u32);
        let count = counters.decayed[idx];
        if count < params.threshold {
            continue;
        }
        let placements = &cluster.objects()[idx].placements;
        let target = (0..cluster.node_count())
            .map(NodeId)
            .filter(|n| !placements.contains(n))
            .fold(None::<(NodeId, u64)>, |best, n| {
                let d = counters.demand(object, n);
                match best {
                    Some((_, top)) if d <= top => best,
                    _ => Some((n, d)),
                }
            });
        let Some((node, _)) = target else { continue };
        let outcome = match cluster.place_object(object, node) {
            Ok(Placement::Added) | Ok(Placement::AlreadyPresent) => ReplicationOutcome::Placed,
            Err(Error::CapacityExceeded {
                free_mb, needed_mb, ..
            }) => ReplicationOutcome::SkippedCapacity { free_mb, needed_mb },
            Err(e) => unreachable!("replication target is a live node: {e}"),
        };
        actions.push(ReplicationAction {
            at: now,
            object,
            node,
            count,
            outcome,
        });
    }
    for c in &mut counters.decayed {
        *c *= params.decay;
    }
    counters.demand.clear();
    actions
}
