use serde::{Deserialize, Serialize};

use crate::model::{Allocation, AugmentedGraph, FlowAssignment, SafetyMargins, Scenario};
use crate::queueing::DelayReport;
use crate::{Error, Result};

/// One SCA iteration, as recorded in the solve history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step: f64,
    /// ‖Δf‖∞ of the smoothed flows.
    pub flow_change: f64,
    /// ‖Δμ‖∞ / ‖M‖∞.
    pub rate_change: f64,
    /// Cost of the smoothed iterate.
    pub cost: f64,
    /// Largest `(Σ fΛR − (1 − ε)μ) / M` over queues, clipped at zero.
    pub stability_violation: f64,
    /// Largest `μ − M` over queues, clipped at zero.
    pub capacity_violation: f64,
    /// Largest `|ε(i+1) − (1 − ρ(i))|` over priced queues loaded by the
    /// flow subproblem, with `ρ(i)` from the subproblem solutions.
    pub margin_gap: f64,
    pub p1_feasible: bool,
    pub p2_feasible: bool,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub method: String,
    pub flows: FlowAssignment,
    pub allocation: Allocation,
    pub margins: SafetyMargins,
    pub cost: f64,
    /// Exact a-posteriori delays.
    pub delays: DelayReport,
    pub feasible: bool,
    pub iterations: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub history: Vec<IterationRecord>,
}

impl Solution {
    /// Compute systems whose production edge carries flow.
    pub fn active_compute(&self, g: &AugmentedGraph) -> Vec<String> {
        g.edges
            .iter()
            .enumerate()
            .filter(|(e, edge)| {
                edge.kind == crate::model::EdgeKind::CompOut && self.flows.edge_max(*e) > 0.5
            })
            .map(|(_, edge)| g.nodes[edge.tail].label())
            .collect()
    }

    pub fn to_document(&self, g: &AugmentedGraph, scenario: Option<&Scenario>) -> SolutionDocument {
        let mut flows = Vec::new();
        for (e, edge) in g.edges.iter().enumerate() {
            for (k, c) in g.commodities.iter().enumerate() {
                let v = self.flows.get(e, k);
                if v != 0.0 {
                    flows.push(FlowEntry {
                        edge: edge.label.clone(),
                        commodity: c.id.clone(),
                        value: v,
                    });
                }
            }
        }
        let queue_entry = |q: usize, value: f64| {
            let queue = &g.queues[q];
            QueueEntry {
                edge: g.edges[queue.edge].label.clone(),
                resource: g.resources[queue.resource].clone(),
                commodity: queue.commodity.map(|k| g.commodities[k].id.clone()),
                value,
            }
        };
        SolutionDocument {
            method: self.method.clone(),
            flows,
            allocation: (0..g.queues.len())
                .map(|q| queue_entry(q, self.allocation.rates[q]))
                .collect(),
            epsilons: (0..g.queues.len())
                .map(|q| queue_entry(q, self.margins.eps[q]))
                .collect(),
            cost: self.cost,
            delays: self.delays.clone(),
            feasible: self.feasible,
            iterations: self.iterations,
            seed: self.seed,
            warnings: self.warnings.clone(),
            scenario: scenario.cloned(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowEntry {
    pub edge: String,
    pub commodity: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub edge: String,
    pub resource: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commodity: Option<String>,
    pub value: f64,
}

/// Serialized form of a [`Solution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub method: String,
    pub flows: Vec<FlowEntry>,
    pub allocation: Vec<QueueEntry>,
    pub epsilons: Vec<QueueEntry>,
    pub cost: f64,
    pub delays: DelayReport,
    pub feasible: bool,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// The solved scenario, so the document can be simulated on its own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
}

impl SolutionDocument {
    fn queue_index(g: &AugmentedGraph, entry: &QueueEntry) -> Result<usize> {
        g.queues
            .iter()
            .position(|q| {
                g.edges[q.edge].label == entry.edge
                    && g.resources[q.resource] == entry.resource
                    && q.commodity.map(|k| &g.commodities[k].id) == entry.commodity.as_ref()
            })
            .ok_or_else(|| {
                Error::Structural(format!("unknown queue {}[{}]", entry.edge, entry.resource))
            })
    }

    /// Flows, rates and margins on the given graph.
    pub fn state(&self, g: &AugmentedGraph) -> Result<(FlowAssignment, Allocation, SafetyMargins)> {
        let mut flows = FlowAssignment::zeros(g);
        for f in &self.flows {
            let e = g
                .edge_index(&f.edge)
                .ok_or_else(|| Error::Structural(format!("unknown edge {}", f.edge)))?;
            let k = g
                .commodity_index(&f.commodity)
                .ok_or_else(|| Error::Structural(format!("unknown commodity {}", f.commodity)))?;
            flows.set(e, k, f.value);
        }
        let mut alloc = Allocation::zeros(g);
        for a in &self.allocation {
            alloc.rates[Self::queue_index(g, a)?] = a.value;
        }
        let mut margins = SafetyMargins::uniform(g, 0.5);
        for a in &self.epsilons {
            margins.eps[Self::queue_index(g, a)?] = a.value;
        }
        Ok((flows, alloc, margins))
    }
}
