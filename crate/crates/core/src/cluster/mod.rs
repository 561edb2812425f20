//! Simulated infrastructure: worker nodes, memory-flavored containers with a
//! warm/cold lifecycle, data-object replicas and the per-invocation cost model.

mod network;
mod timeline;

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use network::NetworkModel;
pub use timeline::PhaseTimeline;

use crate::error::{Error, Result};
use crate::sim::{Handle, SimTime};
use crate::workload::{Catalog, FunctionId, Invocation, ObjectId};

#[derive(
    Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContainerId(pub u64);

/// Memory size class allocated to every execution of a function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemoryFlavor(pub u64);

impl MemoryFlavor {
    pub const DEFAULT_SET: [u64; 5] = [64, 128, 256, 512, 1024];

    pub fn megabytes(self) -> u64 {
        self.0
    }

    pub fn gigabytes(self) -> f64 {
        self.0 as f64 / 1024.0
    }
}

/// Static description of a deployable function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    /// Code package size in MB.
    #[serde(default)]
    pub code_size: u64,
    pub flavor: MemoryFlavor,
    /// Pure compute time with warm container and all data local.
    pub compute_ms: u64,
    /// Result size in MB written to the remote result store.
    #[serde(default)]
    pub write_back: u64,
}

/// A shared data object and the nodes holding a replica of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataObject {
    pub id: String,
    /// Size in MB.
    pub size: u64,
    pub placements: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: usize,
    /// Per-node container memory in MB.
    pub mem_capacity: u64,
    /// Per-node data store in MB.
    pub store_capacity: u64,
    pub flavors: Vec<u64>,
    pub network: NetworkModel,
    pub container_boot_ms: u64,
    pub keep_alive_ms: u64,
    pub max_execution_ms: u64,
    pub billing_granularity_ms: u64,
    /// Warm containers per function started on every node at time zero.
    pub prewarm: usize,
    /// Reclaim idle warm containers (oldest first) when a cold start lacks memory.
    pub evict_idle_on_pressure: bool,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            nodes: 4,
            mem_capacity: 4096,
            store_capacity: 4000,
            flavors: MemoryFlavor::DEFAULT_SET.to_vec(),
            network: NetworkModel::default(),
            container_boot_ms: 100,
            keep_alive_ms: 600_000,
            max_execution_ms: 300_000,
            billing_granularity_ms: 100,
            prewarm: 0,
            evict_idle_on_pressure: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContainerState {
    WarmIdle,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Container {
    pub id: ContainerId,
    pub function: FunctionId,
    pub node: NodeId,
    pub flavor: MemoryFlavor,
    pub state: ContainerState,
    pub keep_alive_expiry: SimTime,
    pub(crate) expiry: Option<Handle>,
}

/// Outcome of asking a node for a container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acquisition {
    WarmHit(Container),
    /// A fresh container; `evicted` carries expiry handles of idle containers
    /// reclaimed to make room, which the caller must cancel.
    ColdStart {
        container: Container,
        evicted: Vec<Handle>,
    },
    Rejected,
}

impl Acquisition {
    pub fn is_warm(&self) -> bool {
        matches!(self, Acquisition::WarmHit(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Added,
    AlreadyPresent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum StoreItem {
    Object(ObjectId),
    Code(FunctionId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionStatus {
    Completed,
    /// Active time hit the execution cap; the container was held for the cap.
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Execution {
    pub timeline: PhaseTimeline,
    pub status: ExecutionStatus,
}

/// An invocation waiting in a node's run queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Queued {
    /// Index of the invocation in the run's trace.
    pub invocation: usize,
    /// Earliest start: arrival plus dispatch latency.
    pub ready_at: SimTime,
    pub dispatch_ms: u64,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub mem_capacity: u64,
    pub store_capacity: u64,
    mem_used: u64,
    store_used: u64,
    /// Idle warm containers per function, most recently released last.
    warm_pool: Vec<Vec<Container>>,
    warm_count: usize,
    busy_containers: usize,
    busy_mb: u64,
    local_objects: HashSet<ObjectId>,
    origin_objects: HashSet<ObjectId>,
    cached_code: HashSet<FunctionId>,
    evictable: VecDeque<StoreItem>,
    pub run_queue: VecDeque<Queued>,
    pub busy_ms_accum: u64,
    pub compute_ms_accum: u64,
    /// Σ busy_ms × flavor MB, the memory-weighted occupancy.
    pub busy_mb_ms_accum: u128,
}

impl NodeState {
    fn new(id: NodeId, config: &ClusterConfig, functions: usize) -> Self {
        NodeState {
            id,
            mem_capacity: config.mem_capacity,
            store_capacity: config.store_capacity,
            mem_used: 0,
            store_used: 0,
            warm_pool: vec![Vec::new(); functions],
            warm_count: 0,
            busy_containers: 0,
            busy_mb: 0,
            local_objects: HashSet::new(),
            origin_objects: HashSet::new(),
            cached_code: HashSet::new(),
            evictable: VecDeque::new(),
            run_queue: VecDeque::new(),
            busy_ms_accum: 0,
            compute_ms_accum: 0,
            busy_mb_ms_accum: 0,
        }
    }

    pub fn free_mem(&self) -> u64 {
        self.mem_capacity - self.mem_used
    }

    pub fn mem_used(&self) -> u64 {
        self.mem_used
    }

    pub fn store_free(&self) -> u64 {
        self.store_capacity - self.store_used
    }

    pub fn store_used(&self) -> u64 {
        self.store_used
    }

    pub fn queue_len(&self) -> usize {
        self.run_queue.len()
    }

    pub fn busy_containers(&self) -> usize {
        self.busy_containers
    }

    pub fn busy_mb(&self) -> u64 {
        self.busy_mb
    }

    /// Waiting plus running invocations.
    pub fn outstanding(&self) -> usize {
        self.run_queue.len() + self.busy_containers
    }

    pub fn warm_idle(&self, function: FunctionId) -> usize {
        self.warm_pool.get(function.index()).map_or(0, Vec::len)
    }

    pub fn warm_count(&self) -> usize {
        self.warm_count
    }

    pub fn has_object(&self, object: ObjectId) -> bool {
        self.local_objects.contains(&object)
    }

    pub fn local_objects(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.local_objects.iter().copied()
    }

    pub fn has_code(&self, function: FunctionId) -> bool {
        self.cached_code.contains(&function)
    }
}

/// Mutable state of the whole simulated cluster.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: ClusterConfig,
    catalog: Catalog,
    nodes: Vec<NodeState>,
    objects: Vec<DataObject>,
    next_container: u64,
}

impl Cluster {
    /// Builds the cluster and ingests every catalog object at its origin nodes.
    pub fn new(config: ClusterConfig, catalog: Catalog) -> Result<Self> {
        if config.nodes == 0 {
            return Err(Error::NoNodes);
        }
        let nodes = (0..config.nodes)
            .map(|i| NodeState::new(NodeId(i), &config, catalog.function_count()))
            .collect();
        let objects = catalog
            .objects()
            .iter()
            .map(|o| DataObject {
                placements: BTreeSet::new(),
                ..o.clone()
            })
            .collect();
        let mut cluster = Cluster {
            config,
            catalog,
            nodes,
            objects,
            next_container: 0,
        };
        for idx in 0..cluster.objects.len() {
            let origins = cluster.catalog.objects()[idx].placements.clone();
            if origins.is_empty() {
                return Err(Error::Invariant(format!(
                    "object {} has no origin replica",
                    cluster.objects[idx].id
                )));
            }
            for node in origins {
                cluster.ingest_origin(ObjectId(idx as u32), node)?;
            }
        }
        Ok(cluster)
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeState> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut NodeState> {
        self.nodes.get_mut(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn object(&self, id: ObjectId) -> Result<&DataObject> {
        self.objects
            .get(id.index())
            .ok_or_else(|| Error::UnknownObject(format!("#{}", id.0)))
    }

    pub fn objects(&self) -> &[DataObject] {
        &self.objects
    }

    fn ingest_origin(&mut self, object: ObjectId, node: NodeId) -> Result<()> {
        let size = self.object(object)?.size;
        let state = self.node_mut(node)?;
        if state.local_objects.contains(&object) {
            return Ok(());
        }
        if size > state.store_free() {
            return Err(Error::CapacityExceeded {
                node: node.0,
                object: self.objects[object.index()].id.clone(),
                needed_mb: size,
                free_mb: self.nodes[node.0].store_free(),
            });
        }
        state.store_used += size;
        state.local_objects.insert(object);
        state.origin_objects.insert(object);
        self.objects[object.index()].placements.insert(node);
        Ok(())
    }

    /// Adds a non-origin replica of `object` on `node` if its store has room.
    /// Never evicts.
    pub fn place_object(&mut self, object: ObjectId, node: NodeId) -> Result<Placement> {
        let size = self.object(object)?.size;
        let state = self.node(node)?;
        if state.local_objects.contains(&object) {
            return Ok(Placement::AlreadyPresent);
        }
        if size > state.store_free() {
            return Err(Error::CapacityExceeded {
                node: node.0,
                object: self.objects[object.index()].id.clone(),
                needed_mb: size,
                free_mb: state.store_free(),
            });
        }
        self.insert_replica(object, node, size);
        Ok(Placement::Added)
    }

    fn insert_replica(&mut self, object: ObjectId, node: NodeId, size: u64) {
        let state = &mut self.nodes[node.0];
        state.store_used += size;
        state.local_objects.insert(object);
        state.evictable.push_back(StoreItem::Object(object));
        self.objects[object.index()].placements.insert(node);
    }

    /// Caches an item on `node`, evicting non-origin items in FIFO order when
    /// needed. Items that cannot fit even after evicting everything evictable
    /// are not cached.
    fn cache_item(&mut self, node: NodeId, item: StoreItem) -> bool {
        let size = self.item_size(item);
        let reclaimable: u64 = self.nodes[node.0]
            .evictable
            .iter()
            .map(|&i| self.item_size(i))
            .sum();
        let state = &self.nodes[node.0];
        if size > state.store_free() + reclaimable {
            return false;
        }
        while self.nodes[node.0].store_free() < size {
            let victim = self.nodes[node.0]
                .evictable
                .pop_front()
                .expect("reclaimable space accounted above");
            self.drop_item(node, victim);
        }
        match item {
            StoreItem::Object(object) => self.insert_replica(object, node, size),
            StoreItem::Code(function) => {
                let state = &mut self.nodes[node.0];
                state.store_used += size;
                state.cached_code.insert(function);
                state.evictable.push_back(item);
            }
        }
        true
    }

    fn item_size(&self, item: StoreItem) -> u64 {
        match item {
            StoreItem::Object(o) => self.objects[o.index()].size,
            StoreItem::Code(f) => self.catalog.function(f).code_size,
        }
    }

    fn drop_item(&mut self, node: NodeId, item: StoreItem) {
        let size = self.item_size(item);
        let state = &mut self.nodes[node.0];
        state.store_used -= size;
        match item {
            StoreItem::Object(o) => {
                state.local_objects.remove(&o);
                self.objects[o.index()].placements.remove(&node);
            }
            StoreItem::Code(f) => {
                state.cached_code.remove(&f);
            }
        }
    }

    /// Fraction of the referenced bytes that have a replica on `node`; 1.0
    /// when nothing (or nothing but empty objects) is referenced.
    pub fn locality_fraction(&self, refs: &[ObjectId], node: NodeId) -> Result<f64> {
        let state = self.node(node)?;
        let mut total = 0u64;
        let mut local = 0u64;
        for &r in refs {
            let size = self.object(r)?.size;
            total += size;
            if state.local_objects.contains(&r) {
                local += size;
            }
        }
        if total == 0 {
            return Ok(1.0);
        }
        Ok(local as f64 / total as f64)
    }

    pub fn transfer_time(&self, megabytes: u64, remote: bool) -> u64 {
        self.config.network.transfer_time(megabytes, remote)
    }

    /// Takes a warm container for `function` if one is idle on `node`,
    /// otherwise reserves memory for a cold start.
    pub fn acquire_container(&mut self, node: NodeId, function: FunctionId) -> Result<Acquisition> {
        let flavor = self.catalog.function(function).flavor;
        let evict = self.config.evict_idle_on_pressure;
        let state = self.node_mut(node)?;
        if let Some(mut container) = state.warm_pool[function.index()].pop() {
            state.warm_count -= 1;
            state.busy_containers += 1;
            state.busy_mb += flavor.0;
            container.state = ContainerState::Busy;
            return Ok(Acquisition::WarmHit(container));
        }
        let mut evicted = Vec::new();
        if state.free_mem() < flavor.0 {
            let idle_mb: u64 = state.warm_pool.iter().flatten().map(|c| c.flavor.0).sum();
            if !evict || state.free_mem() + idle_mb < flavor.0 {
                return Ok(Acquisition::Rejected);
            }
            while state.free_mem() < flavor.0 {
                let victim = state.oldest_idle().expect("idle memory accounted above");
                let c = state.remove_idle(victim);
                evicted.extend(c.expiry);
            }
        }
        state.mem_used += flavor.0;
        state.busy_containers += 1;
        state.busy_mb += flavor.0;
        let id = ContainerId(self.next_container);
        self.next_container += 1;
        Ok(Acquisition::ColdStart {
            container: Container {
                id,
                function,
                node,
                flavor,
                state: ContainerState::Busy,
                keep_alive_expiry: SimTime::ZERO,
                expiry: None,
            },
            evicted,
        })
    }

    /// Creates an idle warm container without running anything; used to
    /// pre-warm nodes. Returns `None` when memory is short.
    pub fn prewarm(&mut self, node: NodeId, function: FunctionId, now: SimTime) -> Option<ContainerId> {
        let flavor = self.catalog.function(function).flavor;
        let keep_alive = self.config.keep_alive_ms;
        let state = self.nodes.get_mut(node.0)?;
        if state.free_mem() < flavor.0 {
            return None;
        }
        state.mem_used += flavor.0;
        let id = ContainerId(self.next_container);
        self.next_container += 1;
        state.warm_pool[function.index()].push(Container {
            id,
            function,
            node,
            flavor,
            state: ContainerState::WarmIdle,
            keep_alive_expiry: now.after(keep_alive),
            expiry: None,
        });
        state.warm_count += 1;
        Some(id)
    }

    /// Computes the phase timeline of `inv` starting now on `node` with the
    /// acquired container, caches fetched code and data on the node and
    /// charges the node's busy and compute accumulators.
    pub fn simulate_invocation(
        &mut self,
        inv: &Invocation,
        node: NodeId,
        dispatch_ms: u64,
        now: SimTime,
        acquisition: &Acquisition,
    ) -> Result<Execution> {
        let spec = self.catalog.function(inv.function).clone();
        self.node(node)?;
        let cold = match acquisition {
            Acquisition::WarmHit(_) => false,
            Acquisition::ColdStart { .. } => true,
            Acquisition::Rejected => {
                return Err(Error::Invariant(format!(
                    "invocation {} started without a container",
                    inv.id
                )))
            }
        };
        let ready = inv.arrival.after(dispatch_ms);
        let queue_wait_ms = now.since(ready);

        let mut timeline = PhaseTimeline {
            dispatch_ms,
            queue_wait_ms,
            started_at: inv.arrival,
            ..PhaseTimeline::default()
        };
        if cold {
            timeline.boot_ms = self.config.container_boot_ms;
            let code_local = self.nodes[node.0].has_code(inv.function);
            timeline.code_fetch_ms = if code_local {
                0
            } else {
                self.transfer_time(spec.code_size, true)
            };
            if !code_local && spec.code_size > 0 {
                self.cache_item(node, StoreItem::Code(inv.function));
            }
        }
        // Fetches are sequential; a fetched object is cached on arrival so
        // later invocations on this node see it as local.
        for &object in &inv.data_refs {
            if self.nodes[node.0].has_object(object) {
                continue;
            }
            let size = self.object(object)?.size;
            timeline.data_fetch_ms += self.transfer_time(size, true);
            self.cache_item(node, StoreItem::Object(object));
        }
        timeline.compute_ms = spec.compute_ms;
        timeline.write_back_ms = if spec.write_back > 0 {
            self.transfer_time(spec.write_back, true)
        } else {
            0
        };

        let status = if timeline.active_ms() > self.config.max_execution_ms {
            timeline.truncate_active(self.config.max_execution_ms);
            ExecutionStatus::Failed
        } else {
            ExecutionStatus::Completed
        };
        timeline.finished_at = inv.arrival.after(timeline.phase_sum());

        let state = &mut self.nodes[node.0];
        state.busy_ms_accum += timeline.active_ms();
        state.compute_ms_accum += timeline.compute_ms;
        state.busy_mb_ms_accum += timeline.active_ms() as u128 * spec.flavor.0 as u128;
        Ok(Execution { timeline, status })
    }

    /// Returns a busy container to its node's warm pool. The caller schedules
    /// the expiry at the returned instant and attaches the handle.
    pub fn release_container(&mut self, mut container: Container, now: SimTime) -> SimTime {
        let expiry = now.after(self.config.keep_alive_ms);
        let state = &mut self.nodes[container.node.0];
        state.busy_containers -= 1;
        state.busy_mb -= container.flavor.0;
        container.state = ContainerState::WarmIdle;
        container.keep_alive_expiry = expiry;
        container.expiry = None;
        state.warm_pool[container.function.index()].push(container);
        state.warm_count += 1;
        expiry
    }

    pub fn attach_expiry(&mut self, node: NodeId, container: ContainerId, handle: Handle) {
        if let Some(c) = self.nodes[node.0]
            .warm_pool
            .iter_mut()
            .flatten()
            .find(|c| c.id == container)
        {
            c.expiry = Some(handle);
        }
    }

    /// Removes an idle container whose keep-alive ran out and frees its
    /// memory. Returns the freed MB, 0 if the container is no longer idle.
    pub fn expire_keep_alive(&mut self, node: NodeId, container: ContainerId) -> u64 {
        let Some(state) = self.nodes.get_mut(node.0) else {
            return 0;
        };
        let found = state
            .warm_pool
            .iter()
            .enumerate()
            .find_map(|(f, pool)| pool.iter().position(|c| c.id == container).map(|i| (f, i)));
        match found {
            Some(at) => state.remove_idle(at).flavor.0,
            None => 0,
        }
    }

    /// Checks the memory and store invariants on every node.
    pub fn check_invariants(&self) -> Result<()> {
        for n in &self.nodes {
            let warm_mb: u64 = n.warm_pool.iter().flatten().map(|c| c.flavor.0).sum();
            if warm_mb + n.busy_mb != n.mem_used || n.mem_used > n.mem_capacity {
                return Err(Error::Invariant(format!(
                    "node {} memory: warm {warm_mb} + busy {} vs used {} / cap {}",
                    n.id, n.busy_mb, n.mem_used, n.mem_capacity
                )));
            }
            if n.store_used > n.store_capacity {
                return Err(Error::Invariant(format!("node {} store over capacity", n.id)));
            }
            if n.busy_ms_accum < n.compute_ms_accum {
                return Err(Error::Invariant(format!("node {} compute exceeds busy", n.id)));
            }
        }
        Ok(())
    }
}

impl NodeState {
    /// Position of the idle container with the earliest expiry (lowest id on ties).
    fn oldest_idle(&self) -> Option<(usize, usize)> {
        self.warm_pool
            .iter()
            .enumerate()
            .flat_map(|(f, pool)| pool.iter().enumerate().map(move |(i, c)| ((f, i), c)))
            .min_by_key(|(_, c)| (c.keep_alive_expiry, c.id))
            .map(|(at, _)| at)
    }

    fn remove_idle(&mut self, (f, i): (usize, usize)) -> Container {
        let c = self.warm_pool[f].remove(i);
        self.warm_count -= 1;
        self.mem_used -= c.flavor.0;
        c
    }
}
