//! Discrete-window food-delivery dispatch simulator.
//!
//! The crate covers the whole pipeline: domain types and wage accounting
//! (`ledger`), road-network routing (`routing`), order batching
//! (`batching`), guarantee-aware bipartite matching (`matching`), work
//! prediction by Gaussian process regression (`gpr`), guarantee policies
//! and the on-boarding gate (`guarantee`), the window-loop engine
//! (`engine`), the metric suite (`metrics`) and synthetic/file workloads
//! (`workload`).

pub mod batching;
pub mod engine;
pub mod gpr;
pub mod guarantee;
pub mod ledger;
pub mod matching;
pub mod metrics;
pub mod routing;
pub mod workload;

pub use engine::{run_simulation, MatchObjective, SimConfig, SimReport};
pub use ledger::{AgentLedger, AgentSession, CostModel, Order};
pub use routing::RoadNetwork;
pub use workload::{Workload, WorkloadConfig};
