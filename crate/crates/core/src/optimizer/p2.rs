//! Rate subproblem: service rates for fixed flows.
//!
//! Each priced rate is scaled by its smallest stable value,
//! `μ_q = u_q m_q` with `u_q = work_q / (1 − stability_q)`, so `m_q ≥ 1`.
//! The bound's `1/μ` and `1/μ²` terms enter through `w_q m_q ≥ 1` and
//! `s_q ≥ w_q²`, both of which then stay within `[0, 1]`.
//!
//! With exact delays the margin is `1 − ρ` itself, and `1/(ε μ²)` becomes
//! `1/(μ (μ − work))`: `s_q ≥ v_q²`, `v_q z_q ≥ 1`, `z_q² ≤ m_q (m_q − β_q)`
//! with `β_q = work_q / u_q`.

use super::p1::{add_latency_chain, members, DELAY_CAP};
use super::program::{solve_convex, Affine, Constraint, ConvexProgram, SolveStatus};
use crate::model::{Allocation, AugmentedGraph, FlowAssignment, QueueModel, SafetyMargins};
use crate::queueing::queue_work;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rate {
    /// No work arrives; priced queues are switched off and unpriced ones
    /// stay at capacity.
    Idle,
    /// Unpriced queue kept at a fixed rate.
    Fixed(f64),
    /// Decision variables `(m, w, s)` around the reference rate `unit`.
    Free { m: usize, w: usize, s: usize, unit: f64 },
}

pub struct P2Program {
    pub program: ConvexProgram,
    rates: Vec<Rate>,
    pub objective_scale: f64,
    /// A fixed-rate queue already violates its stability margin.
    pub trivially_infeasible: bool,
}

impl P2Program {
    pub fn allocation(&self, g: &AugmentedGraph, x: &[f64]) -> Allocation {
        let rates = self
            .rates
            .iter()
            .zip(&g.queues)
            .map(|(r, q)| match *r {
                Rate::Idle if q.cost <= 0.0 => q.capacity,
                Rate::Idle => 0.0,
                Rate::Fixed(v) => v,
                Rate::Free { m, unit, .. } => (x[m] * unit).clamp(0.0, q.capacity),
            })
            .collect();
        Allocation { rates }
    }
}

/// Rate of an unpriced queue: its full capacity, split by offered work among
/// the per-commodity queues of one resource.
fn fixed_rate(g: &AugmentedGraph, work: &[f64], q: usize) -> f64 {
    let queue = &g.queues[q];
    if queue.model == QueueModel::SR {
        return queue.capacity;
    }
    let edge = &g.edges[queue.edge];
    let total: f64 = edge
        .queues
        .iter()
        .filter(|&&o| g.queues[o].slot == queue.slot)
        .map(|&o| work[o])
        .sum();
    queue.capacity * work[q] / total
}

/// Builds the rate subproblem. `eps` enters the delay bound and `stability`
/// the utilization limit `ρ ≤ 1 − stability`.
pub fn assemble_p2(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    eps: &SafetyMargins,
    stability: &SafetyMargins,
) -> P2Program {
    assemble(g, flows, Some(eps), stability)
}

/// The rate subproblem with exact delays in place of the margin bound,
/// which is the bound at `ε = 1 − ρ`.
pub fn assemble_p2_exact(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    stability: &SafetyMargins,
) -> P2Program {
    assemble(g, flows, None, stability)
}

fn assemble(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    eps: Option<&SafetyMargins>,
    stability: &SafetyMargins,
) -> P2Program {
    let nk = g.commodities.len();
    let mut p = ConvexProgram::new();
    let work = queue_work(g, flows);
    let mut rates = Vec::with_capacity(g.queues.len());
    let mut trivially_infeasible = false;
    let mut objective = Affine::default();
    let mut scale: f64 = 0.0;

    for (q, queue) in g.queues.iter().enumerate() {
        let price = flows.edge_max(queue.edge) * queue.cost * queue.capacity;
        let need = work[q] / (1.0 - stability.eps[q]);
        let rate = if work[q] <= 0.0 {
            Rate::Idle
        } else if price <= 0.0 {
            let v = fixed_rate(g, &work, q);
            if need > v * (1.0 + 1e-12) {
                trivially_infeasible = true;
            }
            Rate::Fixed(v)
        } else {
            let label = g.queue_label(q);
            if need > queue.capacity * (1.0 + 1e-12) {
                trivially_infeasible = true;
            }
            let unit = need.min(queue.capacity);
            let m = p.add_var(format!("m[{label}]"), 1.0, queue.capacity / unit);
            let w = p.add_var(format!("w[{label}]"), 0.0, 1.0);
            p.add(Constraint::Hyperbolic { x: w, y: m });
            let s = match eps {
                Some(_) => {
                    let s = p.add_var(format!("s[{label}]"), 0.0, 1.0);
                    p.add(Constraint::Quadratic {
                        squares: vec![(1.0, Affine::var(w))],
                        rhs: Affine::var(s),
                    });
                    s
                }
                None => {
                    let beta = work[q] / unit;
                    let z = p.add_var(format!("z[{label}]"), 0.0, queue.capacity / unit);
                    let v = p.add_var(format!("v[{label}]"), 0.0, f64::INFINITY);
                    let s = p.add_var(format!("s[{label}]"), 0.0, f64::INFINITY);
                    p.add(Constraint::GeoMean {
                        z: Affine::var(z),
                        x: Affine::var(m),
                        y: Affine::var(m).plus(-beta),
                    });
                    p.add(Constraint::Hyperbolic { x: v, y: z });
                    p.add(Constraint::Quadratic {
                        squares: vec![(1.0, Affine::var(v))],
                        rhs: Affine::var(s),
                    });
                    s
                }
            };
            objective.push(m, price * unit / queue.capacity);
            scale = scale.max(price * unit / queue.capacity);
            Rate::Free { m, w, s, unit }
        };
        rates.push(rate);
    }
    let objective_scale = if scale > 0.0 { scale } else { 1.0 };
    for t in &mut objective.terms {
        t.1 /= objective_scale;
    }
    p.objective = objective;

    // Per-commodity queues on one resource share its capacity.
    for edge in &g.edges {
        if edge.queue_model != QueueModel::GR {
            continue;
        }
        for slot in 0..edge.resources.len() {
            let mut a = Affine::constant(-1.0);
            for &q in &edge.queues {
                if g.queues[q].slot != slot {
                    continue;
                }
                match rates[q] {
                    Rate::Free { m, unit, .. } => a.push(m, unit / g.queues[q].capacity),
                    Rate::Fixed(v) => a.constant += v / g.queues[q].capacity,
                    Rate::Idle => {}
                }
            }
            if !a.terms.is_empty() {
                p.less_eq(a);
            }
        }
    }

    // l_k ≥ Σ_e f_ek t_ek with t_ek ≥ D̄_k per resource.
    let mut own = vec![Affine::default(); nk];
    for (e, edge) in g.edges.iter().enumerate() {
        for k in 0..nk {
            let f = flows.get(e, k);
            if f <= 0.0 || !edge.has_queues() || !edge.delays(k) {
                continue;
            }
            let mut bounds = Vec::new();
            for &q in &edge.queues {
                let queue = &g.queues[q];
                let rk = edge.requirement(k, queue.resource);
                if rk == 0.0 || queue.commodity.is_some_and(|c| c != k) {
                    continue;
                }
                let a: f64 = members(g, q)
                    .into_iter()
                    .map(|j| {
                        flows.get(e, j)
                            * g.commodities[j].arrival_rate
                            * edge.requirement(j, queue.resource).powi(2)
                    })
                    .sum();
                // `ε μ²`, or `μ (μ − work)` for exact delays.
                let scale = |mu2: f64, mu_slack: f64| match eps {
                    Some(e) => e.eps[q] * mu2,
                    None => mu_slack,
                };
                let bound = match rates[q] {
                    Rate::Free { w, s, unit, .. } => Affine::default()
                        .term(s, a / scale(unit * unit, unit * unit))
                        .term(w, rk / unit),
                    Rate::Fixed(v) => Affine::constant(a / scale(v * v, v * (v - work[q])) + rk / v),
                    Rate::Idle => continue,
                };
                bounds.push(bound);
            }
            if bounds.len() == 1 && bounds[0].terms.is_empty() {
                own[k].constant += f * bounds[0].constant;
                continue;
            }
            let t = p.add_var(format!("t[{}][{}]", edge.label, g.commodities[k].id), 0.0, DELAY_CAP);
            for b in bounds {
                let mut c = b;
                c.push(t, -1.0);
                p.less_eq(c);
            }
            own[k].push(t, f);
        }
    }
    add_latency_chain(g, &mut p, own);

    P2Program {
        program: p,
        rates,
        objective_scale,
        trivially_infeasible,
    }
}

#[derive(Clone, Debug)]
pub struct P2Result {
    pub allocation: Allocation,
    /// `Σ F c μ` at the solution.
    pub objective: f64,
}

/// Solves the rate subproblem; `None` when infeasible.
pub fn solve_p2(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    eps: &SafetyMargins,
    stability: &SafetyMargins,
) -> Result<Option<P2Result>> {
    solve(g, flows, assemble_p2(g, flows, eps, stability))
}

/// Cheapest rates meeting the latency limits with exact delays; `None` when
/// no rates within capacity do.
pub fn solve_p2_exact(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    stability: &SafetyMargins,
) -> Result<Option<P2Result>> {
    solve(g, flows, assemble_p2_exact(g, flows, stability))
}

fn solve(g: &AugmentedGraph, flows: &FlowAssignment, prog: P2Program) -> Result<Option<P2Result>> {
    if prog.trivially_infeasible {
        return Ok(None);
    }
    let sol = solve_convex(&prog.program)?;
    if sol.status == SolveStatus::Infeasible {
        return Ok(None);
    }
    let allocation = prog.allocation(g, &sol.x);
    Ok(Some(P2Result {
        objective: super::cost::objective_cost(g, flows, &allocation),
        allocation,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_augmented_graph, QueueModel};
    use crate::scenarios::small::single_link;

    /// Unit flow along `s(a) -> a -> b -> d(b)`.
    fn routed(model: QueueModel, capacity: f64) -> (AugmentedGraph, FlowAssignment) {
        let g = build_augmented_graph(&single_link(model, capacity, 1.0, 10.0, 1.0, 0.1)).unwrap();
        let mut f = FlowAssignment::zeros(&g);
        for label in ["s(a)->a", "a->b", "b->d(b)"] {
            f.set(g.edge_index(label).unwrap(), 0, 1.0);
        }
        (g, f)
    }

    /// Smallest μ with `λR²/(εμ²) + R/μ ≤ L`, from the positive root in `1/μ`.
    fn root_oracle(lambda: f64, r: f64, eps: f64, limit: f64) -> f64 {
        let a = lambda * r * r / eps;
        let x = (-r + (r * r + 4.0 * a * limit).sqrt()) / (2.0 * a);
        1.0 / x
    }

    #[test]
    fn single_edge_matches_root() {
        let oracle = root_oracle(10.0, 1.0, 0.5, 0.1);
        assert!((oracle - 20.0).abs() < 1e-12);
        for model in [QueueModel::SR, QueueModel::GR] {
            let (g, f) = routed(model, 1000.0);
            let half = SafetyMargins::uniform(&g, 0.5);
            let r = solve_p2(&g, &f, &half, &half).unwrap().expect("feasible");
            let q = g.edges[g.edge_index("a->b").unwrap()].queues[0];
            assert!((r.allocation.rates[q] - oracle).abs() < 1e-3, "{:?}", r.allocation);
            assert!((r.objective - oracle).abs() < 1e-3);
        }
    }

    #[test]
    fn exact_program_on_single_edge() {
        // 1/(μ − 10) ≤ 0.1 gives μ = 20, where ε = 1 − ρ = 0.5.
        let (g, f) = routed(QueueModel::SR, 1000.0);
        let floor = SafetyMargins::uniform(&g, 1e-3);
        let r = solve_p2_exact(&g, &f, &floor).unwrap().expect("feasible");
        let q = g.edges[g.edge_index("a->b").unwrap()].queues[0];
        assert!((r.allocation.rates[q] - 20.0).abs() < 1e-3);
    }

    #[test]
    fn capacity_below_requirement_is_infeasible() {
        let (g, f) = routed(QueueModel::SR, 15.0);
        let half = SafetyMargins::uniform(&g, 0.5);
        assert!(solve_p2(&g, &f, &half, &half).unwrap().is_none());
        assert!(solve_p2_exact(&g, &f, &half).unwrap().is_none());
    }

    #[test]
    fn zero_flow_costs_nothing() {
        let (g, _) = routed(QueueModel::SR, 1000.0);
        let f = FlowAssignment::zeros(&g);
        let half = SafetyMargins::uniform(&g, 0.5);
        let r = solve_p2(&g, &f, &half, &half).unwrap().expect("feasible");
        assert_eq!(r.objective, 0.0);
        assert!(r.allocation.rates.iter().all(|&m| m.abs() < 1e-9));
    }
}
