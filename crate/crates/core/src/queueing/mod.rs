//! Sojourn-time formulas for dedicated (M/M/1) and shared (M/G/1) queues,
//! the ε-bound, and end-to-end latency evaluation.

mod formulas;
mod latency;

pub use formulas::{
    comp_delay_gr, comp_delay_sr, eps_bound_sojourn, eps_bound_unchecked, mg1_components,
    mg1_sojourn, mm1_sojourn, LoadClass, Mg1Components, QueueLoad,
};
pub use latency::{
    edge_delay, end_to_end_latency, latency_recursion, queue_delay, queue_load, queue_work,
    utilizations, within_limit, CommodityLatency, DelayMode, DelayReport, QueueDelayRow,
    LATENCY_TOL,
};
