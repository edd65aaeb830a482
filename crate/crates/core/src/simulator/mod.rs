//! Discrete-event simulation of a placed solution, used to cross-check the
//! analytic delays.

mod queue;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use queue::{simulate_fork_join, simulate_queue, Estimate, ForkJoinResult, QueueSimResult, SimConfig};

use crate::model::{Allocation, AugmentedGraph, FlowAssignment, QueueModel};
use crate::queueing::{latency_recursion, mg1_sojourn, mm1_sojourn, queue_load};
use crate::Result;

/// One row per (queue, commodity) with traffic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueSimRow {
    pub queue: String,
    pub commodity: String,
    pub mean_sojourn_s: f64,
    pub stderr_s: f64,
    pub rho_emp: f64,
    pub rho_analytic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulatedLatency {
    pub commodity: String,
    pub l_s: f64,
    #[serde(rename = "lT_s")]
    pub lt_s: f64,
    pub stderr_s: f64,
    /// Exact analytic value for comparison.
    #[serde(rename = "analytic_lT_s")]
    pub analytic_lt_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub queues: Vec<QueueSimRow>,
    /// Exact analytic sojourn for each row of `queues`.
    pub analytic_s: Vec<f64>,
    pub commodities: Vec<SimulatedLatency>,
}

impl SimulationReport {
    /// `queue,commodity,mean_sojourn_s,stderr_s,rho_emp,rho_analytic`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.queues {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Largest relative gap between simulated and analytic sojourn times.
    pub fn max_relative_error(&self) -> f64 {
        self.queues
            .iter()
            .zip(&self.analytic_s)
            .filter(|(_, &a)| a > 0.0)
            .map(|(r, &a)| (r.mean_sojourn_s - a).abs() / a)
            .fold(0.0, f64::max)
    }
}

/// 64-bit FNV-1a, used to give every queue its own random stream.
pub fn stream_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct QueueOutcome {
    q: usize,
    members: Vec<usize>,
    result: QueueSimResult,
    analytic: Vec<f64>,
}

/// Simulates every loaded queue of a solution and assembles per-commodity
/// latencies the same way as the analytic evaluation: the slowest resource
/// per edge, summed along paths, then the longest input chain.
pub fn simulate_solution(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    alloc: &Allocation,
    cfg: &SimConfig,
) -> Result<SimulationReport> {
    let loaded: Vec<usize> = (0..g.queues.len())
        .filter(|&q| queue_load(g, flows, alloc.rates[q], q).0.total_lambda() > 0.0)
        .collect();
    let outcomes: Vec<QueueOutcome> = loaded
        .par_iter()
        .map(|&q| {
            let (load, members) = queue_load(g, flows, alloc.rates[q], q);
            let qc = SimConfig {
                stream: cfg.stream ^ stream_id(&g.queue_label(q)),
                ..cfg.clone()
            };
            let result = simulate_queue(&load, &qc)?;
            let analytic = (0..members.len())
                .map(|i| match g.queues[q].model {
                    QueueModel::GR => mm1_sojourn(&load.classes[i], load.mu),
                    QueueModel::SR => mg1_sojourn(&load, i),
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(QueueOutcome {
                q,
                members,
                result,
                analytic,
            })
        })
        .collect::<Result<_>>()?;

    let nk = g.commodities.len();
    let ne = g.edges.len();
    // Slowest resource per (edge, commodity): (mean, stderr, analytic).
    let mut edge_delay = vec![(0.0_f64, 0.0_f64, 0.0_f64); ne * nk];
    let mut rows = Vec::new();
    let mut analytic_s = Vec::new();
    for o in &outcomes {
        let queue = &g.queues[o.q];
        for (i, &k) in o.members.iter().enumerate() {
            if flows.get(queue.edge, k) <= 0.0 {
                continue;
            }
            let est = o.result.sojourn[i];
            rows.push(QueueSimRow {
                queue: g.queue_label(o.q),
                commodity: g.commodities[k].id.clone(),
                mean_sojourn_s: est.mean,
                stderr_s: est.stderr,
                rho_emp: o.result.utilization.mean,
                rho_analytic: o.result.rho_analytic,
            });
            analytic_s.push(o.analytic[i]);
            if !g.edges[queue.edge].delays(k) {
                continue;
            }
            let slot = &mut edge_delay[queue.edge * nk + k];
            if est.mean > slot.0 {
                slot.0 = est.mean;
                slot.1 = est.stderr;
            }
            slot.2 = slot.2.max(o.analytic[i]);
        }
    }

    let mut own = vec![0.0; nk];
    let mut own_var = vec![0.0; nk];
    let mut own_analytic = vec![0.0; nk];
    for e in 0..ne {
        for k in 0..nk {
            let f = flows.get(e, k);
            let (m, s, a) = edge_delay[e * nk + k];
            own[k] += f * m;
            own_var[k] += (f * s).powi(2);
            own_analytic[k] += f * a;
        }
    }
    let total = latency_recursion(g, &own);
    let total_analytic = latency_recursion(g, &own_analytic);
    // Standard error along the chain that attains the maximum.
    let mut total_var = vec![0.0; nk];
    for k in g.topological_order() {
        let up = g.commodities[k]
            .inputs
            .iter()
            .copied()
            .max_by(|&a, &b| total[a].total_cmp(&total[b]));
        total_var[k] = own_var[k] + up.map_or(0.0, |j| total_var[j]);
    }
    let commodities = (0..nk)
        .map(|k| SimulatedLatency {
            commodity: g.commodities[k].id.clone(),
            l_s: own[k],
            lt_s: total[k],
            stderr_s: total_var[k].sqrt(),
            analytic_lt_s: total_analytic[k],
        })
        .collect();

    Ok(SimulationReport {
        config: cfg.clone(),
        queues: rows,
        analytic_s,
        commodities,
    })
}
