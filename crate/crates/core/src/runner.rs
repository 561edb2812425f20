//! Drives one strategy over one trace on the event engine, and sweeps whole
//! scenarios across strategies and seeds.

use std::collections::HashMap;
use std::sync::Arc;

use log::debug;
use rayon::prelude::*;

use crate::cluster::{
    Acquisition, Cluster, ClusterConfig, Container, ContainerId, Execution, ExecutionStatus,
    NodeId, Queued,
};
use crate::dispatch::{
    build_strategy, replication_tick, steal_work, ClusterView, DispatchDecision,
    ReplicationAction, ReplicationOutcome, Strategy, StrategyChoice, StrategyParams,
};
use crate::error::{Error, Result};
use crate::metrics::{billed_mb_ms, Report, ReportRow, RunMetrics, TaskRecord};
use crate::scenario::Scenario;
use crate::sim::{Engine, Handle, LogEntry, Occurrence, RandomSource, SimTime};
use crate::workload::{generate_trace, load_trace, Catalog, Invocation};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Arrival(usize),
    TryStart(NodeId),
    Completion(u64),
    KeepAliveExpiry { node: NodeId, container: ContainerId },
    StealPoll(NodeId),
    ReplicationTick,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Keep every dispatch decision in the output.
    pub record_decisions: bool,
    /// Keep the engine's occurrence log.
    pub log_occurrences: bool,
    /// Check cluster invariants after every event (slow).
    pub check_invariants: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StealEvent {
    pub at: SimTime,
    pub thief: NodeId,
    pub victim: NodeId,
    pub invocations: Vec<usize>,
}

/// Everything one run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    /// `(invocation index, decision)` in dispatch order, when recorded.
    pub decisions: Vec<(usize, DispatchDecision)>,
    pub replications: Vec<ReplicationAction>,
    pub steals: Vec<StealEvent>,
    pub occurrence_log: Option<Vec<LogEntry>>,
    pub cluster: Cluster,
    pub end: SimTime,
}

struct Running {
    invocation: usize,
    container: Container,
    execution: Execution,
}

/// One engine run of one strategy over one trace.
pub struct Simulation {
    engine: Engine<Event>,
    cluster: Cluster,
    strategy: Box<dyn Strategy>,
    choice: StrategyChoice,
    params: StrategyParams,
    trace: Arc<Vec<Invocation>>,
    rng: RandomSource,
    options: RunOptions,
    horizon: SimTime,
    running: HashMap<u64, Running>,
    next_run: u64,
    records: Vec<Option<TaskRecord>>,
    outstanding: usize,
    waiting: usize,
    next_arrival: usize,
    wakeups: Vec<Option<SimTime>>,
    polling: Vec<bool>,
    decisions: Vec<(usize, DispatchDecision)>,
    replications: Vec<ReplicationAction>,
    steals: Vec<StealEvent>,
    seed: u64,
}

impl Simulation {
    /// `rng` continues from wherever trace generation left it; the run draws
    /// from it only for steal victim selection.
    pub fn new(
        cluster: Cluster,
        trace: Arc<Vec<Invocation>>,
        choice: StrategyChoice,
        params: StrategyParams,
        rng: RandomSource,
        horizon: SimTime,
        options: RunOptions,
    ) -> Self {
        let strategy = build_strategy(choice.kind, &params, cluster.objects().len());
        let nodes = cluster.node_count();
        let engine = if options.log_occurrences {
            Engine::new().with_log()
        } else {
            Engine::new()
        };
        Simulation {
            engine,
            records: vec![None; trace.len()],
            seed: rng.seed(),
            cluster,
            strategy,
            choice,
            params,
            trace,
            rng,
            options,
            horizon,
            running: HashMap::new(),
            next_run: 0,
            outstanding: 0,
            waiting: 0,
            next_arrival: 0,
            wakeups: vec![None; nodes],
            polling: vec![false; nodes],
            decisions: Vec::new(),
            replications: Vec::new(),
            steals: Vec::new(),
        }
    }

    pub fn run(mut self) -> Result<RunOutput> {
        self.prewarm();
        if !self.trace.is_empty() {
            let first = self.trace[0].arrival;
            self.engine.schedule(first, Event::Arrival(0));
        }
        if self.strategy.popularity().is_some() {
            self.engine
                .schedule(SimTime(self.params.replication_period_ms), Event::ReplicationTick);
        }
        while let Some(at) = self.engine.peek_time() {
            if at > self.horizon && self.outstanding == 0 && self.next_arrival >= self.trace.len() {
                break;
            }
            let occ = self.engine.step().expect("peeked occurrence");
            self.handle(occ)?;
            if self.options.check_invariants {
                self.cluster.check_invariants()?;
            }
        }
        self.finish()
    }

    fn prewarm(&mut self) {
        let per_fn = self.cluster.config().prewarm;
        if per_fn == 0 {
            return;
        }
        let functions = self.cluster.catalog().function_count();
        for node in 0..self.cluster.node_count() {
            for f in 0..functions {
                for _ in 0..per_fn {
                    let id = crate::workload::FunctionId(f as u32);
                    let Some(cid) = self.cluster.prewarm(NodeId(node), id, SimTime::ZERO) else {
                        break;
                    };
                    let at = SimTime(self.cluster.config().keep_alive_ms);
                    let h = self.engine.schedule(
                        at,
                        Event::KeepAliveExpiry {
                            node: NodeId(node),
                            container: cid,
                        },
                    );
                    self.cluster.attach_expiry(NodeId(node), cid, h);
                }
            }
        }
    }

    fn handle(&mut self, occ: Occurrence<Event>) -> Result<()> {
        match occ.payload {
            Event::Arrival(i) => self.on_arrival(i),
            Event::TryStart(node) => {
                if self.wakeups[node.0] == Some(self.engine.now()) {
                    self.wakeups[node.0] = None;
                }
                self.kick(node)
            }
            Event::Completion(run) => self.on_completion(run),
            Event::KeepAliveExpiry { node, container } => {
                if self.cluster.expire_keep_alive(node, container) > 0 {
                    self.kick(node)?;
                }
                Ok(())
            }
            Event::StealPoll(node) => self.on_steal_poll(node),
            Event::ReplicationTick => {
                self.on_replication_tick();
                Ok(())
            }
        }
    }

    fn on_arrival(&mut self, i: usize) -> Result<()> {
        let trace = Arc::clone(&self.trace);
        let inv = &trace[i];
        let decision = {
            let view = ClusterView::new(&self.cluster);
            self.strategy.decide(inv, &view)?
        };
        let node = decision.node;
        let queued = Queued {
            invocation: i,
            ready_at: inv.arrival.after(decision.dispatch_latency_ms),
            dispatch_ms: decision.dispatch_latency_ms,
        };
        if self.options.record_decisions {
            self.decisions.push((i, decision));
        }
        self.cluster.node_mut(node)?.run_queue.push_back(queued);
        self.outstanding += 1;
        self.waiting += 1;
        self.next_arrival = i + 1;
        if let Some(next) = trace.get(i + 1) {
            self.engine.schedule(next.arrival, Event::Arrival(i + 1));
        }
        self.kick(node)
    }

    /// Starts queued invocations on `node` until the head is not ready yet or
    /// no container can be had.
    fn kick(&mut self, node: NodeId) -> Result<()> {
        let now = self.engine.now();
        loop {
            let Some(head) = self.cluster.node(node)?.run_queue.front().cloned() else {
                break;
            };
            if head.ready_at > now {
                self.wake_at(node, head.ready_at);
                break;
            }
            let inv = &self.trace[head.invocation];
            let acquisition = self.cluster.acquire_container(node, inv.function)?;
            let container = match &acquisition {
                Acquisition::Rejected => break,
                Acquisition::WarmHit(c) => {
                    if let Some(h) = c.expiry {
                        self.engine.cancel(h);
                    }
                    c.clone()
                }
                Acquisition::ColdStart { container, evicted } => {
                    for h in evicted {
                        self.engine.cancel(*h);
                    }
                    container.clone()
                }
            };
            self.cluster.node_mut(node)?.run_queue.pop_front();
            self.waiting -= 1;
            let execution =
                self.cluster
                    .simulate_invocation(inv, node, head.dispatch_ms, now, &acquisition)?;
            let run = self.next_run;
            self.next_run += 1;
            self.engine
                .schedule(execution.timeline.finished_at, Event::Completion(run));
            self.running.insert(
                run,
                Running {
                    invocation: head.invocation,
                    container,
                    execution,
                },
            );
        }
        if self.choice.work_stealing {
            if self.cluster.node(node)?.queue_len() == 0 {
                self.start_polling(node);
            } else {
                self.wake_thieves();
            }
        }
        Ok(())
    }

    fn wake_at(&mut self, node: NodeId, at: SimTime) {
        match self.wakeups[node.0] {
            Some(t) if t <= at => {}
            _ => {
                self.engine.schedule(at, Event::TryStart(node));
                self.wakeups[node.0] = Some(at);
            }
        }
    }

    fn start_polling(&mut self, node: NodeId) {
        if self.polling[node.0] || self.waiting == 0 || self.cluster.node_count() < 2 {
            return;
        }
        self.polling[node.0] = true;
        self.engine
            .schedule_in(self.params.steal_poll_ms, Event::StealPoll(node));
    }

    fn wake_thieves(&mut self) {
        for n in 0..self.cluster.node_count() {
            if self.cluster.nodes()[n].queue_len() == 0 {
                self.start_polling(NodeId(n));
            }
        }
    }

    fn on_steal_poll(&mut self, node: NodeId) -> Result<()> {
        self.polling[node.0] = false;
        if self.cluster.node(node)?.queue_len() > 0 || self.waiting == 0 {
            return Ok(());
        }
        let outcome = steal_work(&mut self.cluster, node, &mut self.rng);
        if !outcome.moved.is_empty() {
            let victim = outcome.victim.expect("a batch has a victim");
            debug!(
                "t={} {node} stole {} from {victim}",
                self.engine.now(),
                outcome.moved.len()
            );
            self.steals.push(StealEvent {
                at: self.engine.now(),
                thief: node,
                victim,
                invocations: outcome.moved.iter().map(|q| q.invocation).collect(),
            });
            self.kick(node)?;
        }
        if self.cluster.node(node)?.queue_len() == 0 {
            self.start_polling(node);
        }
        Ok(())
    }

    fn on_replication_tick(&mut self) {
        let now = self.engine.now();
        let params = self.params.replication();
        if let Some(counters) = self.strategy.popularity() {
            let actions = replication_tick(now, counters, &mut self.cluster, &params);
            self.replications.extend(actions);
        }
        let more_arrivals = self.next_arrival < self.trace.len();
        if now.after(params.period_ms) <= self.horizon || self.outstanding > 0 || more_arrivals {
            self.engine
                .schedule_in(params.period_ms, Event::ReplicationTick);
        }
    }

    fn on_completion(&mut self, run: u64) -> Result<()> {
        let Running {
            invocation,
            container,
            execution,
        } = self
            .running
            .remove(&run)
            .ok_or_else(|| Error::Invariant(format!("completion for unknown run {run}")))?;
        let now = self.engine.now();
        let node = container.node;
        let inv = &self.trace[invocation];
        let spec = self.cluster.catalog().function(inv.function);
        let billed = match execution.status {
            ExecutionStatus::Completed => billed_mb_ms(
                execution.timeline.active_ms(),
                spec.flavor,
                self.cluster.config().billing_granularity_ms,
            ),
            ExecutionStatus::Failed => 0,
        };
        if self.records[invocation].is_some() {
            return Err(Error::Invariant(format!("invocation {} completed twice", inv.id)));
        }
        self.records[invocation] = Some(TaskRecord {
            invocation: inv.id.clone(),
            function: spec.name.clone(),
            node,
            timeline: execution.timeline,
            ideal_ms: spec.compute_ms,
            flavor: spec.flavor,
            billed_mb_ms: billed,
            status: execution.status,
        });
        self.outstanding -= 1;
        let cid = container.id;
        let expiry = self.cluster.release_container(container, now);
        let h: Handle = self
            .engine
            .schedule(expiry, Event::KeepAliveExpiry { node, container: cid });
        self.cluster.attach_expiry(node, cid, h);
        self.kick(node)
    }

    fn finish(self) -> Result<RunOutput> {
        let end = self
            .records
            .iter()
            .flatten()
            .map(|r| r.timeline.finished_at)
            .max()
            .unwrap_or(SimTime::ZERO)
            .max(self.horizon);
        let mut tasks = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.into_iter().enumerate() {
            match r {
                Some(r) => tasks.push(r),
                None => {
                    return Err(Error::Invariant(format!(
                        "invocation {} never finished",
                        self.trace[i].id
                    )))
                }
            }
        }
        let nodes = self.cluster.nodes();
        let capacity: u128 = nodes
            .iter()
            .map(|n| n.mem_capacity as u128 * end.0 as u128)
            .sum();
        let metrics = RunMetrics {
            strategy: self.choice.label(),
            seed: self.seed,
            busy_ms: nodes.iter().map(|n| n.busy_ms_accum).sum(),
            compute_ms: nodes.iter().map(|n| n.compute_ms_accum).sum(),
            busy_mb_ms: nodes.iter().map(|n| n.busy_mb_ms_accum).sum(),
            capacity_mb_ms: capacity,
            replications: self
                .replications
                .iter()
                .filter(|a| a.outcome == ReplicationOutcome::Placed)
                .count() as u64,
            steals: self.steals.iter().map(|s| s.invocations.len() as u64).sum(),
            tasks,
        };
        Ok(RunOutput {
            metrics,
            decisions: self.decisions,
            replications: self.replications,
            steals: self.steals,
            occurrence_log: self.engine.log().map(<[LogEntry]>::to_vec),
            cluster: self.cluster,
            end,
        })
    }
}

/// Catalog, trace and the random source positioned after trace generation,
/// for one seed. Shared by every strategy so comparisons are paired.
#[derive(Debug, Clone)]
pub struct PreparedWorkload {
    pub catalog: Catalog,
    pub trace: Arc<Vec<Invocation>>,
    pub rng: RandomSource,
}

/// Draw order: object sizes, then the trace (when generated).
pub fn prepare_workload(scenario: &Scenario, seed: u64) -> Result<PreparedWorkload> {
    let mut rng = RandomSource::new(seed);
    let catalog = scenario
        .workload
        .build_catalog(scenario.cluster.nodes, &mut rng)?;
    let trace = match &scenario.workload.trace {
        Some(path) => load_trace(path, &catalog)?,
        None => generate_trace(&scenario.workload, &catalog, &mut rng)?,
    };
    Ok(PreparedWorkload {
        catalog,
        trace: Arc::new(trace),
        rng,
    })
}

/// Runs one strategy over a prepared workload.
pub fn run_once(
    cluster: &ClusterConfig,
    workload: &PreparedWorkload,
    choice: StrategyChoice,
    params: &StrategyParams,
    horizon: SimTime,
    options: RunOptions,
) -> Result<RunOutput> {
    let cluster = Cluster::new(cluster.clone(), workload.catalog.clone())?;
    Simulation::new(
        cluster,
        Arc::clone(&workload.trace),
        choice,
        params.clone(),
        workload.rng.clone(),
        horizon,
        options,
    )
    .run()
}

/// Runs every (strategy, seed) pair of a validated scenario. Rows come out
/// strategy-major, seeds in config order; with `aggregate` each strategy
/// also gets a row averaged over seeds.
pub fn run_scenario(scenario: &Scenario, aggregate: bool) -> Result<Report> {
    let errors = scenario.errors();
    if !errors.is_empty() {
        return Err(Error::ConfigInvalid(errors));
    }
    let choices = scenario
        .strategy
        .choices()
        .map_err(Error::ConfigInvalid)?;
    let workloads: Vec<PreparedWorkload> = scenario
        .seeds
        .par_iter()
        .map(|&seed| prepare_workload(scenario, seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(StrategyChoice, &PreparedWorkload)> = choices
        .iter()
        .flat_map(|&c| workloads.iter().map(move |w| (c, w)))
        .collect();
    let horizon = SimTime(scenario.horizon_ms);
    let rows: Vec<ReportRow> = jobs
        .par_iter()
        .map(|&(choice, w)| {
            run_once(
                &scenario.cluster,
                w,
                choice,
                &scenario.strategy.params,
                horizon,
                RunOptions::default(),
            )
            .map(|out| out.metrics.row())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (ci, choice) in choices.iter().enumerate() {
        let group = &rows[ci * workloads.len()..(ci + 1) * workloads.len()];
        out.extend(group.iter().cloned());
        if aggregate {
            let refs: Vec<&ReportRow> = group.iter().collect();
            out.push(ReportRow::mean_of(&choice.label(), &refs));
        }
    }
    Ok(Report {
        metadata: scenario.metadata(),
        rows: out,
    })
}
