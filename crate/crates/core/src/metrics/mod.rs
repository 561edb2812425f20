//! Per-task records and the run-level quality, efficiency, utilization and
//! billing figures derived from them.

mod report;

use serde::Serialize;

pub use report::{emit_report, read_csv_rows, Format, Metric, Report, ReportRow, SeedLabel};

use crate::cluster::{ExecutionStatus, MemoryFlavor, NodeId, PhaseTimeline};
use crate::error::{Error, Result};

/// Outcome of one dispatched invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRecord {
    pub invocation: String,
    pub function: String,
    pub node: NodeId,
    pub timeline: PhaseTimeline,
    pub ideal_ms: u64,
    pub flavor: MemoryFlavor,
    /// Rounded active milliseconds × flavor MB; zero for failed tasks.
    pub billed_mb_ms: u64,
    #[serde(skip)]
    pub status: ExecutionStatus,
}

impl TaskRecord {
    pub fn actual_ms(&self) -> u64 {
        self.timeline.actual_ms()
    }

    pub fn completed(&self) -> bool {
        self.status == ExecutionStatus::Completed
    }

    pub fn billed_gb_seconds(&self) -> f64 {
        mb_ms_to_gb_seconds(self.billed_mb_ms as u128)
    }
}

/// Ideal over actual execution time.
pub fn quality(task: &TaskRecord) -> Result<f64> {
    if !task.completed() {
        return Err(Error::QualityUndefined(task.invocation.clone()));
    }
    let actual = task.actual_ms();
    if actual == 0 {
        return Err(Error::QualityUndefined(task.invocation.clone()));
    }
    Ok(task.ideal_ms as f64 / actual as f64)
}

/// Compute share of node busy time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub value: f64,
    pub compute_ms: u64,
    pub busy_ms: u64,
    /// Set when nothing ran; `value` is then 0.
    pub zero_busy: bool,
}

pub fn efficiency(compute_ms: u64, busy_ms: u64) -> Efficiency {
    if busy_ms == 0 {
        return Efficiency {
            value: 0.0,
            compute_ms,
            busy_ms,
            zero_busy: true,
        };
    }
    Efficiency {
        value: compute_ms as f64 / busy_ms as f64,
        compute_ms,
        busy_ms,
        zero_busy: false,
    }
}

/// Occupied over available capacity. Both sides are memory-weighted
/// (MB × ms) so nodes hosting several containers at once stay within [0, 1].
pub fn utilization(busy_mb_ms: u128, capacity_mb_ms: u128) -> f64 {
    if capacity_mb_ms == 0 {
        return 0.0;
    }
    busy_mb_ms as f64 / capacity_mb_ms as f64
}

/// Active time rounded up to the billing granularity, times flavor MB.
pub fn billed_mb_ms(active_ms: u64, flavor: MemoryFlavor, granularity_ms: u64) -> u64 {
    let rounded = if granularity_ms == 0 {
        active_ms
    } else {
        active_ms.div_ceil(granularity_ms) * granularity_ms
    };
    rounded * flavor.megabytes()
}

pub fn mb_ms_to_gb_seconds(mb_ms: u128) -> f64 {
    mb_ms as f64 / (1000.0 * 1024.0)
}

/// GB-seconds charged for one execution: `ceil(active/g)·g / 1000 × GB`,
/// where active time excludes dispatch and queueing.
pub fn billed_gb_seconds(timeline: &PhaseTimeline, flavor: MemoryFlavor, granularity_ms: u64) -> f64 {
    mb_ms_to_gb_seconds(billed_mb_ms(timeline.active_ms(), flavor, granularity_ms) as u128)
}

/// Nearest-rank percentile (`p` in (0, 100]) of an ascending sample.
pub fn nearest_rank(sorted: &[u64], p: f64) -> Option<u64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Everything a finished run hands to the reporter.
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub strategy: String,
    pub seed: u64,
    pub tasks: Vec<TaskRecord>,
    pub busy_ms: u64,
    pub compute_ms: u64,
    pub busy_mb_ms: u128,
    pub capacity_mb_ms: u128,
    pub replications: u64,
    pub steals: u64,
}

impl RunMetrics {
    pub fn failures(&self) -> usize {
        self.tasks.iter().filter(|t| !t.completed()).count()
    }

    pub fn efficiency(&self) -> Efficiency {
        efficiency(self.compute_ms, self.busy_ms)
    }

    pub fn utilization(&self) -> f64 {
        utilization(self.busy_mb_ms, self.capacity_mb_ms)
    }

    pub fn mean_actual_ms(&self) -> f64 {
        let done: Vec<u64> = self.completed_actuals();
        if done.is_empty() {
            return 0.0;
        }
        done.iter().sum::<u64>() as f64 / done.len() as f64
    }

    fn completed_actuals(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .tasks
            .iter()
            .filter(|t| t.completed())
            .map(TaskRecord::actual_ms)
            .collect();
        v.sort_unstable();
        v
    }

    /// Last completion minus first arrival.
    pub fn makespan_ms(&self) -> u64 {
        let first = self.tasks.iter().map(|t| t.timeline.started_at).min();
        let last = self.tasks.iter().map(|t| t.timeline.finished_at).max();
        match (first, last) {
            (Some(a), Some(b)) => b.since(a),
            _ => 0,
        }
    }

    pub fn row(&self) -> ReportRow {
        let actuals = self.completed_actuals();
        let completed = actuals.len();
        let qualities: Vec<f64> = self.tasks.iter().filter_map(|t| quality(t).ok()).collect();
        let mean_quality = if qualities.is_empty() {
            0.0
        } else {
            qualities.iter().sum::<f64>() / qualities.len() as f64
        };
        let phase = |f: fn(&PhaseTimeline) -> u64| -> u64 { self.tasks.iter().map(|t| f(&t.timeline)).sum() };
        let billed: u128 = self.tasks.iter().map(|t| t.billed_mb_ms as u128).sum();
        ReportRow {
            strategy: self.strategy.clone(),
            seed: SeedLabel::Seed(self.seed),
            tasks: Metric::count(self.tasks.len() as u64),
            failures: Metric::count(self.failures() as u64),
            mean_actual_ms: Metric(self.mean_actual_ms()),
            median_actual_ms: Metric(nearest_rank(&actuals, 50.0).unwrap_or(0) as f64),
            p95_actual_ms: Metric(nearest_rank(&actuals, 95.0).unwrap_or(0) as f64),
            mean_quality: Metric(mean_quality),
            efficiency: Metric(self.efficiency().value),
            utilization: Metric(self.utilization()),
            gb_seconds: Metric(mb_ms_to_gb_seconds(billed)),
            invocations_billed: Metric::count(completed as u64),
            dispatch_ms_total: Metric::count(phase(|t| t.dispatch_ms)),
            queue_ms_total: Metric::count(phase(|t| t.queue_wait_ms)),
            boot_ms_total: Metric::count(phase(|t| t.boot_ms)),
            code_fetch_ms_total: Metric::count(phase(|t| t.code_fetch_ms)),
            data_fetch_ms_total: Metric::count(phase(|t| t.data_fetch_ms)),
            compute_ms_total: Metric::count(phase(|t| t.compute_ms)),
            write_back_ms_total: Metric::count(phase(|t| t.write_back_ms)),
            replications: Metric::count(self.replications),
            steals: Metric::count(self.steals),
        }
    }
}
