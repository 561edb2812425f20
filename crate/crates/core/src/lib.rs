//! Deterministic discrete-event simulator of a serverless cluster with a
//! pluggable event-dispatching layer.
//!
//! A run takes a [`Scenario`] (cluster shape, cost constants, workload and
//! strategy selection), generates or loads an invocation trace per seed, and
//! replays that same trace under each dispatching strategy so the resulting
//! [`metrics::ReportRow`]s are paired comparisons.
//!
//! ```
//! use dispatchsim::{run_scenario, Scenario};
//!
//! let scenario = Scenario::parse(r#"
//!     horizon_ms = 1000
//!     [cluster]
//!     nodes = 1
//!     [workload]
//!     arrival = { kind = "fixed_interval", interval_ms = 100 }
//!     functions = [{ name = "thumb", flavor = 128, compute_ms = 80 }]
//!     [strategy]
//!     name = "round_robin"
//! "#, &[]).unwrap();
//! let report = run_scenario(&scenario, false).unwrap();
//! assert_eq!(report.rows.len(), 1);
//! assert_eq!(report.rows[0].tasks.0, 10.0);
//! ```

pub mod cluster;
pub mod dispatch;
mod error;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod workload;

pub use error::{Error, Result};
pub use runner::{prepare_workload, run_once, run_scenario, RunOptions, RunOutput, Simulation};
pub use scenario::{Diagnostic, Scenario, Severity};
pub use sim::{Engine, RandomSource, SimTime};
