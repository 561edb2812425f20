use serde::{Deserialize, Serialize};

/// Uniform node-to-node transfer cost model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkModel {
    /// Fixed cost per remote access.
    pub latency_ms: u64,
    pub bandwidth_mb_per_s: u64,
    pub local_access_ms: u64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            latency_ms: 1,
            bandwidth_mb_per_s: 100,
            local_access_ms: 0,
        }
    }
}

impl NetworkModel {
    /// Time to move `megabytes`: `latency + ceil(MB / bandwidth * 1000)` when
    /// remote, the local access cost otherwise.
    pub fn transfer_time(&self, megabytes: u64, remote: bool) -> u64 {
        if !remote {
            return self.local_access_ms;
        }
        assert!(self.bandwidth_mb_per_s > 0, "bandwidth must be positive");
        self.latency_ms + (megabytes * 1000).div_ceil(self.bandwidth_mb_per_s)
    }
}
