//! Cost minimization: the flow (P1) and rate (P2) subproblems, the SCA loop
//! that alternates them, randomized rounding and the private-delay baseline.

mod baseline;
mod cost;
pub mod p1;
pub mod p2;
pub mod program;
mod rounding;
mod solution;
mod sparq;

pub use crate::model::{Allocation, SafetyMargins};
pub use baseline::{baseline_graph, baseline_private_model, private_tag};
pub use cost::objective_cost;
pub use p1::{assemble_p1, solve_p1, P1Program, P1Result};
pub use p2::{assemble_p2, assemble_p2_exact, solve_p2, solve_p2_exact, P2Program, P2Result};
pub use program::{solve_convex, Affine, Constraint, ConvexProgram, ConvexSolution, SolveStatus};
pub use rounding::{decompose, round_flows, Decomposition, Embedding, DECOMPOSITION_TOL};
pub use solution::{FlowEntry, IterationRecord, QueueEntry, Solution, SolutionDocument};
pub use sparq::{
    allocate_rates, evaluate_flows, sca, solve_graph, sparq_solve, stability_violation, RateAllocation,
    SolveOptions, SolveState,
};
