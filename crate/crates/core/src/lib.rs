//! Joint service placement, routing and rate allocation over networks of
//! M/M/1 and M/G/1 queues.
//!
//! ```text
//!  scenario file ──► model ──► AugmentedGraph
//!                                 │
//!          queueing (exact / ε-bound delays, latency recursion)
//!                                 │
//!   optimizer: P1 (flows) ◄──► P2 (rates)  ──► rounding ──► Solution
//!                                 │
//!          simulator (discrete-event cross-check)
//!                                 │
//!          scenarios (experiments, sweeps, CSV output)
//! ```

pub mod error;
pub mod model;
pub mod optimizer;
pub mod queueing;
pub mod scenarios;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{
    arrival_rates, build_augmented_graph, validate_scenario, AugNode, AugmentedEdge,
    AugmentedGraph, CommodityInfo, EdgeKind, FlowAssignment, Queue, QueueModel, Scenario,
    Violation,
};
pub use optimizer::{
    baseline_private_model, objective_cost, round_flows, sparq_solve, Allocation,
    SafetyMargins, Solution, SolveOptions,
};
pub use queueing::{end_to_end_latency, DelayMode, DelayReport};

pub use simulator::{simulate_queue, simulate_solution, SimConfig, SimulationReport};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
