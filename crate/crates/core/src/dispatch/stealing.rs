//! Randomized neighbor work stealing between per-node run queues.

use crate::cluster::{Cluster, NodeId, Queued};
use crate::sim::RandomSource;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StealOutcome {
    pub victim: Option<NodeId>,
    /// Invocations moved to the thief, in their original queue order.
    pub moved: Vec<Queued>,
}

/// An idle node picks one other node uniformly at random and takes the back
/// half (rounded up) of its run queue if that queue holds at least two
/// invocations. Consumes one draw unless the cluster has a single node or the
/// thief is not idle.
pub fn steal_work(cluster: &mut Cluster, thief: NodeId, rng: &mut RandomSource) -> StealOutcome {
    let n = cluster.node_count();
    if n < 2 || cluster.nodes()[thief.0].queue_len() > 0 {
        return StealOutcome::default();
    }
    let pick = rng.index(n - 1);
    let victim = NodeId(if pick >= thief.0 { pick + 1 } else { pick });
    steal_from(cluster, thief, victim)
}

/// Deterministic core of [`steal_work`] with the victim fixed.
pub fn steal_from(cluster: &mut Cluster, thief: NodeId, victim: NodeId) -> StealOutcome {
    if thief == victim {
        return StealOutcome::default();
    }
    let queue = &mut cluster.node_mut(victim).expect("victim is a live node").run_queue;
    let len = queue.len();
    let moved: Vec<Queued> = if len >= 2 {
        queue.split_off(len - len.div_ceil(2)).into()
    } else {
        Vec::new()
    };
    cluster
        .node_mut(thief)
        .expect("thief is a live node")
        .run_queue
        .extend(moved.iter().cloned());
    StealOutcome {
        victim: Some(victim),
        moved,
    }
}
