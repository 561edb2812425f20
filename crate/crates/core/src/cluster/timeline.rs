use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

/// Per-invocation breakdown of where time went, from arrival to completion.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseTimeline {
    pub dispatch_ms: u64,
    pub queue_wait_ms: u64,
    pub boot_ms: u64,
    pub code_fetch_ms: u64,
    pub data_fetch_ms: u64,
    pub compute_ms: u64,
    pub write_back_ms: u64,
    pub started_at: SimTime,
    pub finished_at: SimTime,
}

impl PhaseTimeline {
    /// Sum of the seven phases.
    pub fn phase_sum(&self) -> u64 {
        self.dispatch_ms + self.queue_wait_ms + self.active_ms()
    }

    /// Time the container was occupied: everything except dispatch and queueing.
    pub fn active_ms(&self) -> u64 {
        self.boot_ms + self.code_fetch_ms + self.data_fetch_ms + self.compute_ms + self.write_back_ms
    }

    pub fn actual_ms(&self) -> u64 {
        self.finished_at.since(self.started_at)
    }

    pub fn is_conserved(&self) -> bool {
        self.finished_at >= self.started_at && self.actual_ms() == self.phase_sum()
    }

    /// Cuts the active phases, in execution order, so that they sum to at most
    /// `cap_ms`. Returns true if anything was cut.
    pub(crate) fn truncate_active(&mut self, cap_ms: u64) -> bool {
        let mut budget = cap_ms;
        let mut cut = false;
        for phase in [
            &mut self.boot_ms,
            &mut self.code_fetch_ms,
            &mut self.data_fetch_ms,
            &mut self.compute_ms,
            &mut self.write_back_ms,
        ] {
            if *phase > budget {
                *phase = budget;
                cut = true;
            }
            budget -= *phase;
        }
        cut
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_preserves_order_and_budget() {
        let mut t = PhaseTimeline {
            boot_ms: 100,
            code_fetch_ms: 101,
            data_fetch_ms: 201,
            compute_ms: 80,
            ..Default::default()
        };
        assert!(t.truncate_active(250));
        assert_eq!((t.boot_ms, t.code_fetch_ms, t.data_fetch_ms, t.compute_ms), (100, 101, 49, 0));
        assert_eq!(t.active_ms(), 250);
        assert!(!t.truncate_active(1000));
    }
}
