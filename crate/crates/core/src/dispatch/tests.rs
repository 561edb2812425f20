use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::strategy::Strategy as Gen;

use super::*;
use crate::cluster::{ClusterConfig, DataObject, FunctionSpec, MemoryFlavor, Queued};
use crate::sim::{RandomSource, SimTime};
use crate::workload::Catalog;

fn function(name: &str) -> FunctionSpec {
    FunctionSpec {
        name: name.into(),
        code_size: 10,
        flavor: MemoryFlavor(128),
        compute_ms: 50,
        write_back: 0,
    }
}

fn cluster(nodes: usize, objects: &[(u64, usize)]) -> Cluster {
    let objects = objects
        .iter()
        .enumerate()
        .map(|(i, &(size, origin))| DataObject {
            id: format!("o{i}"),
            size,
            placements: BTreeSet::from([NodeId(origin)]),
        })
        .collect();
    let catalog = Catalog::new(vec![function("f"), function("g")], objects).unwrap();
    Cluster::new(
        ClusterConfig {
            nodes,
            ..ClusterConfig::default()
        },
        catalog,
    )
    .unwrap()
}

fn inv(function: u32, refs: &[u32]) -> Invocation {
    Invocation {
        id: "x".into(),
        function: FunctionId(function),
        data_refs: refs.iter().map(|&r| ObjectId(r)).collect(),
        origin: "default".into(),
        arrival: SimTime::ZERO,
    }
}

fn enqueue(c: &mut Cluster, node: usize, count: usize) {
    for i in 0..count {
        c.node_mut(NodeId(node)).unwrap().run_queue.push_back(Queued {
            invocation: node * 1000 + i,
            ready_at: SimTime::ZERO,
            dispatch_ms: 0,
        });
    }
}

fn decide_all(kind: StrategyKind, c: &Cluster, events: &[Invocation]) -> Vec<usize> {
    let mut s = build_strategy(kind, &StrategyParams::default(), c.objects().len());
    let view = ClusterView::new(c);
    events.iter().map(|e| s.decide(e, &view).unwrap().node.0).collect()
}

#[test]
fn round_robin_cycles() {
    let c = cluster(3, &[]);
    let events = vec![inv(0, &[]); 6];
    assert_eq!(decide_all(StrategyKind::RoundRobin, &c, &events), [0, 1, 2, 0, 1, 2]);
    let one = cluster(1, &[]);
    assert_eq!(decide_all(StrategyKind::RoundRobin, &one, &events), [0; 6]);
}

#[test]
fn round_robin_balances_exactly() {
    let c = cluster(4, &[]);
    let k = 250;
    let picks = decide_all(StrategyKind::RoundRobin, &c, &vec![inv(0, &[]); 4 * k]);
    for node in 0..4 {
        assert_eq!(picks.iter().filter(|&&n| n == node).count(), k);
    }
}

#[test]
fn least_loaded_picks_argmin_lowest_id() {
    let mut c = cluster(3, &[]);
    enqueue(&mut c, 0, 3);
    enqueue(&mut c, 2, 2);
    assert_eq!(decide_all(StrategyKind::LeastLoaded, &c, &[inv(0, &[])]), [1]);
    let even = cluster(3, &[]);
    assert_eq!(decide_all(StrategyKind::LeastLoaded, &even, &[inv(0, &[])]), [0]);

    let mut after = cluster(3, &[]);
    enqueue(&mut after, 0, 1);
    enqueue(&mut after, 1, 1);
    let node = decide_all(StrategyKind::LeastLoaded, &after, &[inv(0, &[])])[0];
    assert_eq!(node, 2);
    enqueue(&mut after, node, 1);
    assert_eq!(after.node(NodeId(2)).unwrap().queue_len(), 1);
}

#[test]
fn hash_affinity_is_stable_and_spreads_names() {
    let mut functions: Vec<FunctionSpec> = (0..1000).map(|i| function(&format!("fn-{i}"))).collect();
    functions.push(function("again"));
    let catalog = Catalog::new(functions, vec![]).unwrap();
    let c = Cluster::new(ClusterConfig { nodes: 4, ..ClusterConfig::default() }, catalog).unwrap();
    let events: Vec<Invocation> = (0..1000).map(|i| inv(i, &[])).collect();
    let picks = decide_all(StrategyKind::HashAffinity, &c, &events);
    for node in 0..4 {
        let got = picks.iter().filter(|&&n| n == node).count();
        assert!((150..=350).contains(&got), "node {node}: {got}");
    }
    // independent oracle: the same hash reduced by hand
    for (i, &node) in picks.iter().enumerate().take(20) {
        assert_eq!(node as u64, stable_hash(format!("fn-{i}").as_bytes()) % 4);
    }
    let twice = decide_all(StrategyKind::HashAffinity, &c, &[inv(1000, &[]), inv(1000, &[])]);
    assert_eq!(twice[0], twice[1]);
}

#[test]
fn score_examples() {
    // o0 (100MB) on node 0, o1 (300MB) on node 1
    let mut c = cluster(2, &[(100, 0), (300, 1)]);
    let w = ScoreWeights::default();
    c.prewarm(NodeId(1), FunctionId(0), SimTime::ZERO).unwrap();
    {
        let view = ClusterView::new(&c);
        assert_eq!(locality_score(&inv(0, &[1]), NodeId(1), &view, &w), 1.0);
    }
    enqueue(&mut c, 0, 16);
    {
        let view = ClusterView::new(&c);
        assert_eq!(locality_score(&inv(0, &[1]), NodeId(0), &view, &w), 0.0);
    }

    let mut c = cluster(2, &[(100, 0), (300, 1)]);
    c.prewarm(NodeId(0), FunctionId(0), SimTime::ZERO).unwrap();
    enqueue(&mut c, 0, 5);
    let w = ScoreWeights {
        queue_cap: 10,
        ..ScoreWeights::default()
    };
    let view = ClusterView::new(&c);
    let got = locality_score(&inv(0, &[0, 1]), NodeId(0), &view, &w);
    assert!((got - 0.525).abs() < 1e-12, "{got}");
}

#[test]
fn data_aware_follows_the_bytes() {
    let c = cluster(3, &[(100, 2), (50, 2)]);
    assert_eq!(decide_all(StrategyKind::DataAware, &c, &[inv(0, &[0, 1])]), [2]);
}

#[test]
fn data_aware_without_refs_reduces_to_load() {
    let mut c = cluster(3, &[]);
    enqueue(&mut c, 0, 4);
    enqueue(&mut c, 1, 1);
    enqueue(&mut c, 2, 3);
    assert_eq!(decide_all(StrategyKind::DataAware, &c, &[inv(0, &[])]), [1]);
}

#[test]
fn mcgrath_prefers_warm_over_data() {
    let mut c = cluster(2, &[(500, 0)]);
    c.prewarm(NodeId(1), FunctionId(0), SimTime::ZERO).unwrap();
    assert_eq!(decide_all(StrategyKind::McgrathQueues, &c, &[inv(0, &[0])]), [1]);
    assert_eq!(decide_all(StrategyKind::DataAware, &c, &[inv(0, &[0])]), [0]);
}

/// Score recomputed from raw node state, without going through the view.
fn oracle_score(c: &Cluster, e: &Invocation, node: usize, w: &ScoreWeights) -> f64 {
    let state = &c.nodes()[node];
    let warm = if state.warm_idle(e.function) > 0 { 1.0 } else { 0.0 };
    let mut local = 0u64;
    let mut total = 0u64;
    for r in &e.data_refs {
        let o = &c.objects()[r.index()];
        total += o.size;
        if o.placements.contains(&NodeId(node)) {
            local += o.size;
        }
    }
    let frac = if total == 0 { 1.0 } else { local as f64 / total as f64 };
    let load = (state.outstanding() as f64 / w.queue_cap as f64).min(1.0);
    w.w_code * warm + w.w_data * frac + w.w_load * (1.0 - load)
}

#[test]
fn data_aware_matches_brute_force() {
    let mut c = cluster(3, &[(100, 0), (40, 1), (60, 2), (10, 1)]);
    c.prewarm(NodeId(2), FunctionId(0), SimTime::ZERO).unwrap();
    enqueue(&mut c, 1, 3);
    let w = ScoreWeights::default();
    let view = ClusterView::new(&c);
    for refs in [&[0u32, 1][..], &[1, 3], &[2], &[0, 1, 2, 3], &[]] {
        let e = inv(0, refs);
        let scores: Vec<f64> = (0..3).map(|n| oracle_score(&c, &e, n, &w)).collect();
        for (n, s) in scores.iter().enumerate() {
            assert!((locality_score(&e, NodeId(n), &view, &w) - s).abs() < 1e-12);
        }
        let best = (0..3).fold(0, |b, n| if scores[n] > scores[b] { n } else { b });
        let (node, score) = best_node(&e, &view, &w).unwrap();
        assert_eq!(node.0, best, "refs {refs:?}, scores {scores:?}");
        assert_eq!(score, scores[best]);
    }
}

#[test]
fn proactive_cluster_is_sticky() {
    let mut c = cluster(3, &[(100, 1), (100, 2)]);
    let mut s = build_strategy(StrategyKind::ProactiveCluster, &StrategyParams::default(), 2);
    let first = s.decide(&inv(0, &[0]), &ClusterView::new(&c)).unwrap();
    assert_eq!(first.node, NodeId(1));
    assert!(matches!(first.rationale, Rationale::Cluster { score: Some(_), .. }));
    // node 1 becomes unattractive, but the key stays put
    enqueue(&mut c, 1, 20);
    let second = s.decide(&inv(0, &[0]), &ClusterView::new(&c)).unwrap();
    assert_eq!(second.node, NodeId(1));
    assert!(matches!(second.rationale, Rationale::Cluster { score: None, .. }));
    let other = s.decide(&inv(0, &[1]), &ClusterView::new(&c)).unwrap();
    assert_eq!(other.node, NodeId(2));
    assert_eq!(s.popularity().unwrap().count(ObjectId(0)), 2.0);
    assert_eq!(s.popularity().unwrap().demand(ObjectId(0), NodeId(1)), 2);
}

#[test]
fn replication_below_threshold_does_nothing() {
    let mut c = cluster(4, &[(10, 0)]);
    let mut counters = PopularityCounter::new(1);
    counters.set_count(ObjectId(0), 9.0);
    let actions = replication_tick(SimTime(1000), &mut counters, &mut c, &ReplicationParams::default());
    assert!(actions.is_empty());
    assert_eq!(counters.count(ObjectId(0)), 4.5);
}

#[test]
fn replication_targets_highest_demand() {
    let mut c = cluster(4, &[(10, 0)]);
    let mut counters = PopularityCounter::new(1);
    for (node, n) in [(1, 2), (3, 9), (0, 1)] {
        for _ in 0..n {
            counters.record(ObjectId(0), NodeId(node));
        }
    }
    assert_eq!(counters.count(ObjectId(0)), 12.0);
    let actions = replication_tick(SimTime(1000), &mut counters, &mut c, &ReplicationParams::default());
    assert_eq!(actions.len(), 1);
    assert_eq!(actions[0].node, NodeId(3));
    assert_eq!(actions[0].outcome, ReplicationOutcome::Placed);
    assert!(c.node(NodeId(3)).unwrap().has_object(ObjectId(0)));
    assert_eq!(counters.count(ObjectId(0)), 6.0);
    assert_eq!(counters.demand(ObjectId(0), NodeId(3)), 0);
}

#[test]
fn replication_reports_full_stores() {
    let catalog = Catalog::new(
        vec![function("f")],
        vec![
            DataObject { id: "hot".into(), size: 300, placements: BTreeSet::from([NodeId(0)]) },
            DataObject { id: "fill".into(), size: 900, placements: BTreeSet::from([NodeId(1)]) },
        ],
    )
    .unwrap();
    let mut c = Cluster::new(
        ClusterConfig { nodes: 2, store_capacity: 1000, ..ClusterConfig::default() },
        catalog,
    )
    .unwrap();
    let mut counters = PopularityCounter::new(2);
    counters.set_count(ObjectId(0), 12.0);
    let actions = replication_tick(SimTime(1000), &mut counters, &mut c, &ReplicationParams::default());
    assert_eq!(
        actions[0].outcome,
        ReplicationOutcome::SkippedCapacity { free_mb: 100, needed_mb: 300 }
    );
    assert!(!c.node(NodeId(1)).unwrap().has_object(ObjectId(0)));
}

#[test]
fn steal_takes_back_half_rounded_up() {
    let mut c = cluster(2, &[]);
    enqueue(&mut c, 1, 5);
    let out = steal_from(&mut c, NodeId(0), NodeId(1));
    assert_eq!(out.moved.len(), 3);
    assert_eq!(c.node(NodeId(1)).unwrap().queue_len(), 2);
    let ids: Vec<usize> = c.node(NodeId(0)).unwrap().run_queue.iter().map(|q| q.invocation).collect();
    assert_eq!(ids, [1002, 1003, 1004]);
}

#[test]
fn steal_edge_cases_are_empty() {
    let mut rng = RandomSource::new(1);
    let mut empty = cluster(3, &[]);
    assert!(steal_work(&mut empty, NodeId(0), &mut rng).moved.is_empty());
    let mut single = cluster(1, &[]);
    enqueue(&mut single, 0, 4);
    let before = rng.clone().next_u64();
    assert_eq!(steal_work(&mut single, NodeId(0), &mut rng), StealOutcome::default());
    assert_eq!(rng.next_u64(), before, "no draw without a neighbour");
    let mut short = cluster(2, &[]);
    enqueue(&mut short, 1, 1);
    assert!(steal_work(&mut short, NodeId(0), &mut rng).moved.is_empty());
}

#[test]
fn idle_node_eventually_steals() {
    let mut rng = RandomSource::new(7);
    let mut c = cluster(5, &[]);
    enqueue(&mut c, 4, 6);
    let mut polls = 0;
    while c.node(NodeId(0)).unwrap().queue_len() == 0 {
        steal_work(&mut c, NodeId(0), &mut rng);
        polls += 1;
        assert!(polls < 200);
    }
    assert_eq!(c.node(NodeId(0)).unwrap().queue_len(), 3);
}

#[test]
fn dispatch_latency_defaults_and_override() {
    let p = StrategyParams::default();
    assert_eq!(p.dispatch_latency(StrategyKind::RoundRobin), 1);
    assert_eq!(p.dispatch_latency(StrategyKind::DataAware), 2);
    assert_eq!(p.dispatch_latency(StrategyKind::ProactiveCluster), 2);
    let o = StrategyParams { dispatch_ms: Some(5), ..p };
    let c = cluster(2, &[]);
    for kind in StrategyKind::ALL {
        let mut s = build_strategy(kind, &o, 0);
        assert_eq!(s.decide(&inv(0, &[]), &ClusterView::new(&c)).unwrap().dispatch_latency_ms, 5);
    }
}

#[test]
fn strategy_names_parse() {
    for kind in StrategyKind::ALL {
        assert_eq!(kind.name().parse::<StrategyKind>().unwrap(), kind);
    }
    let c: StrategyChoice = "hash_affinity+work_stealing".parse().unwrap();
    assert!(c.work_stealing);
    assert_eq!(c.label(), "hash_affinity+work_stealing");
    let err = "nope".parse::<StrategyChoice>().unwrap_err();
    for name in StrategyKind::REGISTRY {
        assert!(err.contains(name), "{err}");
    }
    assert!("work_stealing".parse::<StrategyChoice>().is_err());
}

fn arb_cluster() -> impl Gen<Value = Cluster> {
    (
        2usize..6,
        proptest::collection::vec((1u64..400, 0usize..6), 1..6),
        proptest::collection::vec(0usize..20, 6),
        proptest::collection::vec(any::<bool>(), 6),
    )
        .prop_map(|(nodes, objects, queues, warm)| {
            let objects: Vec<(u64, usize)> = objects.into_iter().map(|(s, o)| (s, o % nodes)).collect();
            let mut c = cluster(nodes, &objects);
            for n in 0..nodes {
                enqueue(&mut c, n, queues[n]);
                if warm[n] {
                    c.prewarm(NodeId(n), FunctionId(0), SimTime::ZERO);
                }
            }
            c
        })
}

proptest! {
    #[test]
    fn scaling_weights_keeps_the_argmax(
        c in arb_cluster(),
        refs in proptest::collection::btree_set(0u32..6, 0..4),
        w in (0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0),
        k in 0.001f64..1000.0,
    ) {
        let refs: Vec<u32> = refs.into_iter().filter(|&r| (r as usize) < c.objects().len()).collect();
        let e = inv(0, &refs);
        let base = ScoreWeights { w_code: w.0, w_data: w.1, w_load: w.2, queue_cap: 16 };
        let scaled = ScoreWeights { w_code: w.0 * k, w_data: w.1 * k, w_load: w.2 * k, queue_cap: 16 };
        let view = ClusterView::new(&c);
        prop_assert_eq!(best_node(&e, &view, &base).unwrap().0, best_node(&e, &view, &scaled).unwrap().0);
    }

    #[test]
    fn every_strategy_returns_a_live_node(c in arb_cluster(), refs in proptest::collection::btree_set(0u32..6, 0..4), f in 0u32..2) {
        let refs: Vec<u32> = refs.into_iter().filter(|&r| (r as usize) < c.objects().len()).collect();
        for kind in StrategyKind::ALL {
            let picks = decide_all(kind, &c, &[inv(f, &refs), inv(f, &refs)]);
            prop_assert!(picks.iter().all(|&n| n < c.node_count()));
            if kind == StrategyKind::ProactiveCluster || kind == StrategyKind::HashAffinity {
                prop_assert_eq!(picks[0], picks[1]);
            }
        }
    }

    #[test]
    fn stealing_conserves_invocations(c in arb_cluster(), seed in any::<u64>(), polls in proptest::collection::vec(0usize..6, 1..30)) {
        let mut c = c;
        let ids = |c: &Cluster| {
            let mut v: Vec<usize> = c.nodes().iter().flat_map(|n| n.run_queue.iter().map(|q| q.invocation)).collect();
            v.sort();
            v
        };
        let before = ids(&c);
        let mut rng = RandomSource::new(seed);
        for p in polls {
            let thief = NodeId(p % c.node_count());
            let len_before: Vec<usize> = c.nodes().iter().map(|n| n.queue_len()).collect();
            let out = steal_work(&mut c, thief, &mut rng);
            if let Some(victim) = out.victim {
                let len = len_before[victim.0];
                let expected = if len >= 2 { len.div_ceil(2) } else { 0 };
                prop_assert_eq!(out.moved.len(), expected);
            }
        }
        prop_assert_eq!(ids(&c), before);
    }
}
