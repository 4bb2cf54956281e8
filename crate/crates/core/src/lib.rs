//! Cold-start management for Function-as-a-Service platforms.
//!
//! - [`trace`]: per-minute invocation tables, per-app traces, synthetic workloads.
//! - [`histogram`]: the range-limited idle-time histogram.
//! - [`forecaster`]: auto-ARIMA next-idle-time prediction.
//! - [`policy`]: fixed keep-alive, no-unloading, and the hybrid histogram policy.
//! - [`simulator`]: trace replay with cold-start and wasted-memory accounting.
//! - [`report`]: sweep summaries, Pareto sweeps, CSV/JSON output.

pub mod error;
pub mod forecaster;
pub mod histogram;
pub mod policy;
pub mod report;
pub mod simulator;
pub mod trace;

pub use error::{Error, Result};
pub use histogram::{IdleTime, IdleTimeHistogram};
pub use policy::{AppTracker, DecisionSource, HybridConfig, PolicyDecision, PolicySpec};
pub use simulator::{simulate_all, simulate_app, AppResult, SimOptions};
pub use trace::{AppTrace, Expansion};
