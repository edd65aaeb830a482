//! Private-delay baseline: routing and placement with constant per-edge
//! delays, rates set to a fixed over-provisioning factor times the load.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cost::objective_cost;
use super::p1::{add_latency_chain, flow_variables, members};
use super::program::{solve_convex, Affine, ConvexProgram, SolveStatus};
use super::rounding::decompose;
use super::solution::Solution;
use super::sparq::SolveOptions;
use crate::model::{
    build_augmented_graph, Allocation, AugmentedGraph, FlowAssignment, SafetyMargins, Scenario,
};
use crate::queueing::{end_to_end_latency, latency_recursion, queue_work, within_limit, DelayMode};
use crate::{Error, Result};

/// Nominal delay of commodity `k` on edge `e`: its service time at full
/// capacity on the slowest resource.
fn nominal_delay(g: &AugmentedGraph, e: usize, k: usize) -> f64 {
    let edge = &g.edges[e];
    edge.resources
        .iter()
        .map(|r| edge.requirement(k, r.resource) / r.capacity)
        .fold(0.0, f64::max)
}

/// Offered work of each GR resource slot or SR queue, as `(queues, capacity)`.
fn capacity_groups(g: &AugmentedGraph) -> Vec<(Vec<usize>, f64)> {
    let mut groups = Vec::new();
    for edge in &g.edges {
        for (slot, er) in edge.resources.iter().enumerate() {
            let qs: Vec<usize> = edge
                .queues
                .iter()
                .copied()
                .filter(|&q| g.queues[q].slot == slot)
                .collect();
            if !qs.is_empty() {
                groups.push((qs, er.capacity));
            }
        }
    }
    groups
}

fn private_cost(g: &AugmentedGraph, f: &FlowAssignment, alpha: f64) -> f64 {
    let work = queue_work(g, f);
    g.queues.iter().enumerate().map(|(q, x)| alpha * x.cost * work[q]).sum()
}

/// True when `f` meets the private model's capacity and latency constraints.
fn private_feasible(g: &AugmentedGraph, f: &FlowAssignment, alpha: f64) -> bool {
    let work = queue_work(g, f);
    let fits = capacity_groups(g)
        .iter()
        .all(|(qs, cap)| alpha * qs.iter().map(|&q| work[q]).sum::<f64>() <= cap * (1.0 + 1e-9));
    let nk = g.commodities.len();
    let mut own = vec![0.0; nk];
    for e in 0..g.edges.len() {
        for (k, o) in own.iter_mut().enumerate() {
            *o += f.get(e, k) * nominal_delay(g, e, k);
        }
    }
    let total = latency_recursion(g, &own);
    fits && (0..nk).all(|k| within_limit(total[k], g.commodities[k].latency_limit))
}

/// Method tag of a baseline run, e.g. `private_1.4`.
pub fn private_tag(alpha: f64) -> String {
    format!("private_{alpha:?}")
}

/// Solves the private-delay model for over-provisioning factor `alpha`.
pub fn baseline_private_model(s: &Scenario, alpha: f64, o: &SolveOptions) -> Result<Solution> {
    baseline_graph(&build_augmented_graph(s)?, alpha, o)
}

/// [`baseline_private_model`] on an already built graph.
pub fn baseline_graph(g: &AugmentedGraph, alpha: f64, o: &SolveOptions) -> Result<Solution> {
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} must be at least 1")));
    }
    let method = private_tag(alpha);
    let nk = g.commodities.len();
    let mut p = ConvexProgram::new();
    let fv = flow_variables(g, &mut p, |_, _| false);
    let var = |e: usize, k: usize| fv[e * nk + k];

    let mut objective = Affine::default();
    for (q, queue) in g.queues.iter().enumerate() {
        let edge = &g.edges[queue.edge];
        for k in members(g, q) {
            if let Some(v) = var(queue.edge, k) {
                let work = g.commodities[k].arrival_rate * edge.requirement(k, queue.resource);
                objective.push(v, alpha * queue.cost * work);
            }
        }
    }
    let scale = objective.terms.iter().map(|t| t.1.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        objective.terms.iter_mut().for_each(|t| t.1 /= scale);
    }
    p.objective = objective;

    for (qs, cap) in capacity_groups(g) {
        let mut a = Affine::constant(-cap);
        for q in qs {
            let queue = &g.queues[q];
            let edge = &g.edges[queue.edge];
            for k in members(g, q) {
                if let Some(v) = var(queue.edge, k) {
                    a.push(v, alpha * g.commodities[k].arrival_rate * edge.requirement(k, queue.resource));
                }
            }
        }
        if !a.terms.is_empty() {
            p.less_eq(a);
        }
    }

    let mut own = vec![Affine::default(); nk];
    for e in 0..g.edges.len() {
        for (k, o) in own.iter_mut().enumerate() {
            let d = nominal_delay(g, e, k);
            if let (Some(v), true) = (var(e, k), d > 0.0) {
                o.push(v, d);
            }
        }
    }
    add_latency_chain(g, &mut p, own);

    let sol = solve_convex(&p)?;
    let mut warnings = Vec::new();
    let flows = if sol.status == SolveStatus::Infeasible {
        warnings.push("private model infeasible".to_string());
        None
    } else {
        let mut f = FlowAssignment::zeros(g);
        for (i, v) in fv.iter().enumerate() {
            if let Some(v) = v {
                f.values[i] = sol.x[*v].clamp(0.0, 1.0);
            }
        }
        Some(f)
    };

    let Some(frac) = flows else {
        let flows = FlowAssignment::zeros(g);
        let allocation = Allocation::zeros(g);
        let margins = SafetyMargins::uniform(g, 0.5);
        let delays = end_to_end_latency(g, &flows, &allocation, &margins, DelayMode::Exact)?;
        return Ok(Solution {
            method,
            flows,
            allocation,
            margins,
            cost: 0.0,
            delays,
            feasible: false,
            iterations: 0,
            seed: o.seed,
            warnings,
            history: Vec::new(),
        });
    };

    let flows = if frac.is_integral(1e-6) {
        let mut f = frac;
        f.values.iter_mut().for_each(|v| *v = v.round());
        f
    } else {
        let d = decompose(g, &frac)?;
        let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
        let mut best: Option<(bool, f64, FlowAssignment)> = None;
        for draw in 0..o.samples.max(1) + o.max_redraws {
            if draw >= o.samples.max(1) && best.as_ref().is_some_and(|b| b.0) {
                break;
            }
            let f = d.sample(g, &mut rng);
            let key = (private_feasible(g, &f, alpha), private_cost(g, &f, alpha));
            let better = match &best {
                None => true,
                Some(b) => (key.0, -key.1) > (b.0, -b.1),
            };
            if better {
                best = Some((key.0, key.1, f));
            }
        }
        let (ok, _, f) = best.expect("at least one draw");
        if !ok {
            warnings.push("rounded flows violate the private model".to_string());
        }
        f
    };

    let work = queue_work(g, &flows);
    let mut allocation = Allocation::zeros(g);
    for (qs, cap) in capacity_groups(g) {
        let want: f64 = qs.iter().map(|&q| alpha * work[q]).sum();
        let shrink = if want > cap {
            warnings.push(format!(
                "allocation on {} capped at capacity",
                g.edges[g.queues[qs[0]].edge].label
            ));
            cap / want
        } else {
            1.0
        };
        for q in qs {
            allocation.rates[q] = alpha * work[q] * shrink;
        }
    }
    let margins = SafetyMargins {
        eps: (0..g.queues.len())
            .map(|q| {
                if work[q] > 0.0 && allocation.rates[q] > 0.0 {
                    (1.0 - work[q] / allocation.rates[q]).clamp(1e-3, 0.999)
                } else {
                    0.5
                }
            })
            .collect(),
    };
    let delays = end_to_end_latency(g, &flows, &allocation, &margins, DelayMode::Exact)?;
    Ok(Solution {
        method,
        cost: objective_cost(g, &flows, &allocation),
        feasible: delays.feasible(),
        flows,
        allocation,
        margins,
        delays,
        iterations: 0,
        seed: o.seed,
        warnings,
        history: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QueueModel;
    use crate::scenarios::small::single_link;

    #[test]
    fn alpha_one_saturates_the_queue() {
        let s = single_link(QueueModel::GR, 1000.0, 1.0, 10.0, 1.0, 0.1);
        let sol = baseline_private_model(&s, 1.0, &SolveOptions::default()).unwrap();
        assert!(!sol.feasible);
        let k = &sol.delays.commodities[0];
        assert!(k.lt_s.is_infinite());
        assert!(sol.delays.utilization.iter().any(|&r| (r - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rates_scale_with_alpha() {
        let s = single_link(QueueModel::GR, 1000.0, 1.0, 10.0, 1.0, 0.1);
        let sol = baseline_private_model(&s, 2.5, &SolveOptions::default()).unwrap();
        assert!((sol.cost - 25.0).abs() < 1e-9);
        // M/M/1 at μ = 25, λ = 10.
        assert!((sol.delays.commodities[0].lt_s - 1.0 / 15.0).abs() < 1e-12);
        assert!(sol.feasible);
    }

    #[test]
    fn capped_at_capacity() {
        let s = single_link(QueueModel::GR, 15.0, 1.0, 10.0, 1.0, 0.1);
        let sol = baseline_private_model(&s, 2.0, &SolveOptions::default()).unwrap();
        assert!(sol.allocation.rates.iter().all(|&m| m <= 15.0 + 1e-9));
    }

    #[test]
    fn rejects_alpha_below_one() {
        let s = single_link(QueueModel::GR, 1000.0, 1.0, 10.0, 1.0, 0.1);
        assert!(baseline_private_model(&s, 0.9, &SolveOptions::default()).is_err());
    }
}
