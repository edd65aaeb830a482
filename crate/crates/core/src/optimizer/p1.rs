//! Flow subproblem: placement and routing with service rates held fixed.

use super::program::{solve_convex, Affine, Constraint, ConvexProgram, SolveStatus};
use crate::model::{
    Allocation, AugNode, AugmentedGraph, EdgeKind, FlowAssignment, QueueModel, SafetyMargins,
};
use crate::Result;

/// Upper bound on delay variables, seconds.
pub(crate) const DELAY_CAP: f64 = 1e4;

/// Flow values within this distance of 0 or 1 are snapped to it.
const FLOW_SNAP: f64 = 1e-7;

/// Rates at or below this fraction of capacity are treated as switched off.
const RATE_FLOOR: f64 = 1e-9;

/// Variable layout of an assembled flow subproblem.
pub struct P1Program {
    pub program: ConvexProgram,
    /// Variable of each (edge, commodity) flow, `None` when fixed at zero.
    pub flow_vars: Vec<Option<usize>>,
    pub n_commodities: usize,
    pub objective_scale: f64,
}

impl P1Program {
    pub fn flows(&self, g: &AugmentedGraph, x: &[f64]) -> FlowAssignment {
        let mut f = FlowAssignment::zeros(g);
        for (i, v) in self.flow_vars.iter().enumerate() {
            if let Some(v) = v {
                let y = x[*v].clamp(0.0, 1.0);
                f.values[i] = if y < FLOW_SNAP {
                    0.0
                } else if y > 1.0 - FLOW_SNAP {
                    1.0
                } else {
                    y
                };
            }
        }
        f
    }
}

/// Builds the flow subproblem at rates `mu`, with bilinear delay terms
/// convexified around `f0`. `eps` enters the delay bound and `stability`
/// the utilization limit `ρ ≤ 1 − stability`.
pub fn assemble_p1(
    g: &AugmentedGraph,
    mu: &Allocation,
    eps: &SafetyMargins,
    stability: &SafetyMargins,
    f0: &FlowAssignment,
) -> P1Program {
    let nk = g.commodities.len();
    let mut p = ConvexProgram::new();

    let flow_vars = flow_variables(g, &mut p, |e, k| {
        let edge = &g.edges[e];
        edge.queues.iter().any(|&q| {
            let queue = &g.queues[q];
            mu.rates[q] <= RATE_FLOOR * queue.capacity
                && edge.requirement(k, queue.resource) > 0.0
                && queue.commodity.is_none_or(|c| c == k)
        })
    });
    let fv = |e: usize, k: usize| flow_vars[e * nk + k];

    // Activation variables on priced edges.
    let mut objective = Affine::default();
    let mut scale: f64 = 0.0;
    for (e, edge) in g.edges.iter().enumerate() {
        let price: f64 = edge.queues.iter().map(|&q| mu.rates[q] * g.queues[q].cost).sum();
        if price <= 0.0 {
            continue;
        }
        let fe = p.add_var(format!("F[{}]", edge.label), 0.0, 1.0);
        objective.push(fe, price);
        scale = scale.max(price);
        for k in 0..nk {
            if let Some(v) = fv(e, k) {
                p.less_eq(Affine::var(v).term(fe, -1.0));
            }
        }
    }
    let objective_scale = if scale > 0.0 { scale } else { 1.0 };
    for t in &mut objective.terms {
        t.1 /= objective_scale;
    }
    p.objective = objective;

    // Stability with margin at the current rates.
    for (q, queue) in g.queues.iter().enumerate() {
        let edge = &g.edges[queue.edge];
        if mu.rates[q] <= RATE_FLOOR * queue.capacity {
            continue;
        }
        let denom = 1.0 - stability.eps[q];
        let mut a = Affine::constant(-mu.rates[q]);
        for k in members(g, q) {
            if let Some(v) = fv(queue.edge, k) {
                let work = g.commodities[k].arrival_rate * edge.requirement(k, queue.resource);
                a.push(v, work / denom);
            }
        }
        if !a.terms.is_empty() {
            p.less_eq(a);
        }
    }
    // Per-commodity queues on one resource share its capacity.
    for (e, edge) in g.edges.iter().enumerate() {
        if edge.queue_model != QueueModel::GR {
            continue;
        }
        for (slot, er) in edge.resources.iter().enumerate() {
            let mut a = Affine::constant(-er.capacity);
            for &q in &edge.queues {
                if g.queues[q].slot != slot {
                    continue;
                }
                let k = g.queues[q].commodity.expect("GR queue has a commodity");
                if let Some(v) = fv(e, k) {
                    let work = g.commodities[k].arrival_rate * edge.requirement(k, er.resource);
                    a.push(v, work / (1.0 - stability.eps[q]));
                }
            }
            if !a.terms.is_empty() {
                p.less_eq(a);
            }
        }
    }

    // Latency: l_k ≥ Σ_e t_ek with t_ek ≥ f_k · D̄_k(f) per resource.
    let mut own: Vec<Affine> = vec![Affine::default(); nk];
    for (e, edge) in g.edges.iter().enumerate() {
        if !edge.has_queues() {
            continue;
        }
        for k in 0..nk {
            let Some(fk) = fv(e, k) else { continue };
            if p.upper[fk] == 0.0 || !edge.delays(k) {
                continue;
            }
            let t = p.add_var(format!("t[{}][{}]", edge.label, g.commodities[k].id), 0.0, DELAY_CAP);
            own[k].push(t, 1.0);
            for &q in &edge.queues {
                let queue = &g.queues[q];
                let rk = edge.requirement(k, queue.resource);
                if rk == 0.0 || queue.commodity.is_some_and(|c| c != k) {
                    continue;
                }
                let m = mu.rates[q];
                let coeff = |j: usize| {
                    g.commodities[j].arrival_rate * edge.requirement(j, queue.resource).powi(2)
                        / (eps.eps[q] * m * m)
                };
                let mut squares = vec![(coeff(k), Affine::var(fk))];
                let mut rhs = Affine::var(t).term(fk, -rk / m);
                for j in members(g, q) {
                    if j == k {
                        continue;
                    }
                    let Some(fj) = fv(e, j) else { continue };
                    if p.upper[fj] == 0.0 {
                        continue;
                    }
                    // f_k f_j ≤ ¼(f_k + f_j)² − ¼ lin[(f_k − f_j)²] around f0.
                    let b = coeff(j) / 4.0;
                    let y0 = f0.get(e, k) - f0.get(e, j);
                    squares.push((b, Affine::var(fk).term(fj, 1.0)));
                    rhs = rhs.term(fk, 2.0 * b * y0).term(fj, -2.0 * b * y0).plus(-b * y0 * y0);
                }
                p.add(Constraint::Quadratic { squares, rhs });
            }
        }
    }
    add_latency_chain(g, &mut p, own);

    P1Program {
        program: p,
        flow_vars,
        n_commodities: nk,
        objective_scale,
    }
}

/// Adds one variable per admissible (edge, commodity) flow together with
/// conservation at network nodes, input/output coupling at computation
/// nodes and the fixed consumption flows. Pairs for which `dead` holds are
/// pinned at zero.
pub(crate) fn flow_variables(
    g: &AugmentedGraph,
    p: &mut ConvexProgram,
    dead: impl Fn(usize, usize) -> bool,
) -> Vec<Option<usize>> {
    let nk = g.commodities.len();
    let mut flow_vars = vec![None; g.edges.len() * nk];
    for (e, edge) in g.edges.iter().enumerate() {
        for k in 0..nk {
            if !edge.allowed[k] {
                continue;
            }
            let (lo, hi) = match edge.kind {
                EdgeKind::Sink => (1.0, 1.0),
                _ if dead(e, k) => (0.0, 0.0),
                _ => (0.0, 1.0),
            };
            flow_vars[e * nk + k] =
                Some(p.add_var(format!("f[{}][{}]", edge.label, g.commodities[k].id), lo, hi));
        }
    }
    let fv = |e: usize, k: usize| flow_vars[e * nk + k];
    let aff = |e: usize, k: usize| fv(e, k).map(Affine::var).unwrap_or_default();

    // Conservation at network nodes.
    for (n, node) in g.nodes.iter().enumerate() {
        if !matches!(node, AugNode::Network(_)) {
            continue;
        }
        for k in 0..nk {
            let mut a = Affine::default();
            for &e in &g.in_edges[n] {
                if let Some(v) = fv(e, k) {
                    a.push(v, 1.0);
                }
            }
            for &e in &g.out_edges[n] {
                if let Some(v) = fv(e, k) {
                    a.push(v, -1.0);
                }
            }
            if !a.terms.is_empty() {
                p.equal(a);
            }
        }
    }

    // Output/input coupling at computation nodes.
    for (n, node) in g.nodes.iter().enumerate() {
        if !matches!(node, AugNode::Computation { .. }) {
            continue;
        }
        let out = g.out_edges[n][0];
        let inb = g.in_edges[n][0];
        for (k, c) in g.commodities.iter().enumerate() {
            for &l in &c.inputs {
                let mut a = aff(out, k);
                for (v, w) in aff(inb, l).terms {
                    a.push(v, -w);
                }
                if !a.terms.is_empty() {
                    p.equal(a);
                }
            }
        }
    }
    flow_vars
}

/// Commodities that share queue `q`.
pub(crate) fn members(g: &AugmentedGraph, q: usize) -> Vec<usize> {
    let queue = &g.queues[q];
    let edge = &g.edges[queue.edge];
    match queue.commodity {
        Some(k) => vec![k],
        None => (0..g.commodities.len())
            .filter(|&k| edge.allowed[k] && edge.requirement(k, queue.resource) > 0.0)
            .collect(),
    }
}

/// Adds `lT_k ≥ own_k + lT_j` for every input `j` (`lT_k ≥ own_k` for
/// source commodities) and the latency limits as bounds on `lT`.
pub(crate) fn add_latency_chain(g: &AugmentedGraph, p: &mut ConvexProgram, own: Vec<Affine>) {
    let lt: Vec<usize> = g
        .commodities
        .iter()
        .map(|c| {
            let limit = if c.latency_limit.is_finite() {
                c.latency_limit * (1.0 - 1e-7)
            } else {
                DELAY_CAP
            };
            p.add_var(format!("lT[{}]", c.id), 0.0, limit)
        })
        .collect();
    for (k, own_k) in own.into_iter().enumerate() {
        let base = own_k.term(lt[k], -1.0);
        let inputs = &g.commodities[k].inputs;
        if inputs.is_empty() {
            p.less_eq(base.clone());
        }
        for &j in inputs {
            p.less_eq(base.clone().term(lt[j], 1.0));
        }
    }
}

#[derive(Clone, Debug)]
pub struct P1Result {
    pub flows: FlowAssignment,
    pub objective: f64,
}

/// Solves the flow subproblem; `None` when infeasible.
pub fn solve_p1(
    g: &AugmentedGraph,
    mu: &Allocation,
    eps: &SafetyMargins,
    stability: &SafetyMargins,
    f0: &FlowAssignment,
) -> Result<Option<P1Result>> {
    let prog = assemble_p1(g, mu, eps, stability, f0);
    let sol = solve_convex(&prog.program)?;
    if sol.status == SolveStatus::Infeasible {
        return Ok(None);
    }
    Ok(Some(P1Result {
        flows: prog.flows(g, &sol.x),
        objective: sol.objective * prog.objective_scale,
    }))
}
