//! Successive convex approximation over the flow and rate subproblems,
//! followed by randomized rounding and a final rate allocation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::objective_cost;
use super::p1::{members, solve_p1};
use super::p2::{solve_p2, solve_p2_exact};
use super::rounding::decompose;
use super::solution::{IterationRecord, Solution};
use crate::model::{
    build_augmented_graph, Allocation, AugmentedGraph, FlowAssignment, SafetyMargins, Scenario,
};
use crate::queueing::{end_to_end_latency, queue_work, utilizations, DelayMode};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Stop when both ‖Δf‖∞ and ‖Δμ‖∞/‖M‖∞ fall below this.
    pub tolerance: f64,
    pub eps_init: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub seed: u64,
    /// Rounding draws; the cheapest feasible one is kept.
    pub samples: usize,
    /// Further draws allowed when none of the first `samples` is feasible.
    pub max_redraws: usize,
    pub record_history: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 200,
            tolerance: 1e-4,
            eps_init: 0.75,
            eps_min: 1e-3,
            eps_max: 0.999,
            seed: 0,
            samples: 1,
            max_redraws: 32,
            record_history: true,
        }
    }
}

/// Smoothed iterate of the SCA loop.
#[derive(Clone, Debug)]
pub struct SolveState {
    pub flows: FlowAssignment,
    pub rates: Allocation,
    pub margins: SafetyMargins,
    pub iteration: usize,
    /// `margin_gap` of the last iteration whose rate subproblem was solved.
    pub margin_gap: f64,
    pub history: Vec<IterationRecord>,
}

/// Outcome of allocating rates to fixed flows.
#[derive(Clone, Debug)]
pub struct RateAllocation {
    pub allocation: Allocation,
    pub margins: SafetyMargins,
    pub cost: f64,
}

/// Supports with at most this many assignments are evaluated exhaustively
/// instead of sampled.
pub const ENUMERATION_LIMIT: usize = 32;

/// A subproblem the solver stalls on is treated as infeasible: near the
/// latency limits the interior point method can fail to certify either way.
fn settled<T>(r: Result<Option<T>>) -> Result<Option<T>> {
    match r {
        Err(Error::Solver { .. }) => Ok(None),
        other => other,
    }
}

fn clamp_eps(x: f64, o: &SolveOptions) -> f64 {
    x.clamp(o.eps_min, o.eps_max)
}

/// Unpriced queues always run at capacity, so their margin is the slack
/// left when every admissible commodity uses them.
fn full_load_margin(g: &AugmentedGraph, q: usize, o: &SolveOptions) -> f64 {
    let queue = &g.queues[q];
    let edge = &g.edges[queue.edge];
    let work: f64 = edge
        .queues
        .iter()
        .filter(|&&x| g.queues[x].slot == queue.slot)
        .flat_map(|&x| members(g, x))
        .map(|k| g.commodities[k].arrival_rate * edge.requirement(k, queue.resource))
        .sum();
    clamp_eps(1.0 - work / queue.capacity, o)
}

/// `ε(0)`: the configured initial margin, except on unpriced queues.
pub fn initial_margins(g: &AugmentedGraph, o: &SolveOptions) -> SafetyMargins {
    SafetyMargins {
        eps: (0..g.queues.len())
            .map(|q| {
                if g.queues[q].cost <= 0.0 {
                    full_load_margin(g, q, o)
                } else {
                    o.eps_init
                }
            })
            .collect(),
    }
}

/// Runs the SCA loop and returns the fractional iterate.
///
/// The flow subproblem keeps `ρ ≤ 1 − ε(i)` and bounds delays at `ε(i)`.
/// The rate subproblem uses exact delays, its own fixed point `ε = 1 − ρ`,
/// which the margin update then tracks.
pub fn sca(g: &AugmentedGraph, o: &SolveOptions) -> Result<Option<SolveState>> {
    let cap = Allocation::capacity(g);
    let m_norm = g.max_capacity().max(f64::MIN_POSITIVE);
    let floor = SafetyMargins::uniform(g, o.eps_min);
    let mut mu = cap.clone();
    let mut eps = initial_margins(g, o);
    let mut f_hat = FlowAssignment::zeros(g);
    let mut history = Vec::new();
    let mut iteration = 0;
    let mut margin_gap = f64::INFINITY;

    for i in 1..=o.max_iterations {
        iteration = i;
        let gamma = 2.0 / (i as f64 + 2.0);
        let p1 = settled(solve_p1(g, &mu, &eps, &eps, &f_hat))?;
        let p1_feasible = p1.is_some();
        let f_bar = match p1 {
            Some(r) => r.flows,
            None if i == 1 => return Ok(None),
            None => f_hat.clone(),
        };
        let p2 = settled(solve_p2_exact(g, &f_bar, &floor))?;
        let p2_feasible = p2.is_some();

        let f_new = if i == 1 {
            f_bar.clone()
        } else {
            let mut f = f_hat.clone();
            for (v, b) in f.values.iter_mut().zip(&f_bar.values) {
                *v += gamma * (b - *v);
            }
            f
        };
        let mut mu_new = mu.clone();
        let mut eps_new = eps.clone();
        let mut target = Vec::new();
        match &p2 {
            Some(r) => {
                for (m, b) in mu_new.rates.iter_mut().zip(&r.allocation.rates) {
                    *m += gamma * (b - *m);
                }
                let rho = utilizations(g, &f_bar, &r.allocation);
                let work = queue_work(g, &f_bar);
                for (q, queue) in g.queues.iter().enumerate() {
                    if work[q] > 0.0 && queue.cost > 0.0 {
                        target.push((q, 1.0 - rho[q]));
                        eps_new.eps[q] =
                            clamp_eps(gamma * eps.eps[q] + (1.0 - gamma) * (1.0 - rho[q]), o);
                    }
                }
            }
            // No rates meet the bound at these flows: give the flow
            // subproblem room by moving rates back towards capacity.
            None => {
                for (m, c) in mu_new.rates.iter_mut().zip(&cap.rates) {
                    *m += gamma * (c - *m);
                }
            }
        }
        // Keep the accepted iterate inside its own stability margin.
        let work = queue_work(g, &f_new);
        for (q, queue) in g.queues.iter().enumerate() {
            if work[q] <= 0.0 {
                continue;
            }
            if work[q] > (1.0 - eps_new.eps[q]) * mu_new.rates[q] {
                mu_new.rates[q] = (work[q] / (1.0 - eps_new.eps[q])).min(queue.capacity);
            }
            let rho = work[q] / mu_new.rates[q].max(f64::MIN_POSITIVE);
            if rho > 1.0 - eps_new.eps[q] {
                eps_new.eps[q] = (1.0 - rho).max(o.eps_min);
            }
        }

        let flow_change = f_new.max_abs_diff(&f_hat);
        let rate_change = mu_new.max_abs_diff(&mu) / m_norm;
        if !target.is_empty() {
            margin_gap = target
                .iter()
                .map(|&(q, t)| (eps_new.eps[q] - t).abs())
                .fold(0.0, f64::max);
        }
        if o.record_history {
            history.push(IterationRecord {
                iteration: i,
                step: gamma,
                flow_change,
                rate_change,
                cost: objective_cost(g, &f_new, &mu_new),
                stability_violation: stability_violation(g, &f_new, &mu_new, &eps_new),
                capacity_violation: g
                    .queues
                    .iter()
                    .zip(&mu_new.rates)
                    .map(|(q, m)| (m - q.capacity).max(0.0))
                    .fold(0.0, f64::max),
                margin_gap,
                p1_feasible,
                p2_feasible,
            });
        }
        f_hat = f_new;
        mu = mu_new;
        eps = eps_new;
        if i > 1 && p1_feasible && p2_feasible && flow_change < o.tolerance && rate_change < o.tolerance {
            break;
        }
    }
    Ok(Some(SolveState {
        flows: f_hat,
        rates: mu,
        margins: eps,
        iteration,
        margin_gap,
        history,
    }))
}

/// Largest relative violation of `(1 − ε)μ ≥ Σ fΛR`.
pub fn stability_violation(
    g: &AugmentedGraph,
    f: &FlowAssignment,
    mu: &Allocation,
    eps: &SafetyMargins,
) -> f64 {
    let work = queue_work(g, f);
    g.queues
        .iter()
        .enumerate()
        .map(|(q, queue)| ((work[q] - (1.0 - eps.eps[q]) * mu.rates[q]) / queue.capacity).max(0.0))
        .fold(0.0, f64::max)
}

/// Allocates rates to fixed flows. The exact-delay program is the rate
/// subproblem at its fixed point `ε = 1 − ρ`; should the solver stall on it,
/// the bound is used with the final margins and then with `ε(0)`.
pub fn allocate_rates(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    start: &SafetyMargins,
    o: &SolveOptions,
) -> Result<Option<RateAllocation>> {
    let floor = SafetyMargins::uniform(g, o.eps_min);
    let work = queue_work(g, flows);
    let exact = solve_p2_exact(g, flows, &floor);
    if let Ok(found) = exact {
        return Ok(found.map(|r| {
            let rho = utilizations(g, flows, &r.allocation);
            let mut margins = start.clone();
            for q in 0..g.queues.len() {
                if work[q] > 0.0 {
                    margins.eps[q] = clamp_eps(1.0 - rho[q], o);
                }
            }
            RateAllocation {
                cost: r.objective,
                allocation: r.allocation,
                margins,
            }
        }));
    }
    settled(exact)?;
    for margins in [start.clone(), initial_margins(g, o)] {
        if let Some(r) = settled(solve_p2(g, flows, &margins, &margins))? {
            return Ok(Some(RateAllocation {
                cost: r.objective,
                allocation: r.allocation,
                margins,
            }));
        }
    }
    Ok(None)
}

/// Rates and exact evaluation for fixed integral flows.
pub fn evaluate_flows(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    start: &SafetyMargins,
    o: &SolveOptions,
    method: &str,
) -> Result<Option<Solution>> {
    let Some(r) = allocate_rates(g, flows, start, o)? else {
        return Ok(None);
    };
    let delays = end_to_end_latency(g, flows, &r.allocation, &r.margins, DelayMode::Exact)?;
    Ok(Some(Solution {
        method: method.to_string(),
        flows: flows.clone(),
        cost: r.cost,
        feasible: delays.feasible(),
        delays,
        allocation: r.allocation,
        margins: r.margins,
        iterations: 0,
        seed: o.seed,
        warnings: Vec::new(),
        history: Vec::new(),
    }))
}

fn infeasible(g: &AugmentedGraph, o: &SolveOptions, state: Option<&SolveState>, why: &str) -> Result<Solution> {
    let flows = state.map(|s| s.flows.clone()).unwrap_or_else(|| FlowAssignment::zeros(g));
    let allocation = Allocation::zeros(g);
    let margins = initial_margins(g, o);
    let delays = end_to_end_latency(g, &flows, &allocation, &margins, DelayMode::Exact)?;
    Ok(Solution {
        method: "sparq".into(),
        flows,
        allocation,
        margins,
        cost: 0.0,
        delays,
        feasible: false,
        iterations: state.map_or(0, |s| s.iteration),
        seed: o.seed,
        warnings: vec![why.to_string()],
        history: state.map(|s| s.history.clone()).unwrap_or_default(),
    })
}

/// Full pipeline: SCA, rounding, final rate allocation and exact evaluation.
pub fn sparq_solve(s: &Scenario, o: &SolveOptions) -> Result<Solution> {
    solve_graph(&build_augmented_graph(s)?, o)
}

/// [`sparq_solve`] on an already built graph.
pub fn solve_graph(g: &AugmentedGraph, o: &SolveOptions) -> Result<Solution> {
    let Some(state) = sca(g, o)? else {
        return infeasible(g, o, None, "flow subproblem infeasible at the initial rates");
    };

    let mut best: Option<Solution> = None;
    let consider = |cand: Solution, best: &mut Option<Solution>| {
        let better = match best {
            None => true,
            Some(b) => (cand.feasible, -cand.cost) > (b.feasible, -b.cost),
        };
        if better {
            *best = Some(cand);
        }
    };

    if state.flows.is_integral(1e-6) {
        let mut f = state.flows.clone();
        f.values.iter_mut().for_each(|v| *v = v.round());
        if let Some(s) = evaluate_flows(g, &f, &state.margins, o, "sparq")? {
            consider(s, &mut best);
        }
    } else {
        let d = decompose(g, &state.flows)?;
        let all = d.enumerate(g, ENUMERATION_LIMIT);
        let enumerated = all.is_some();
        if let Some(all) = all {
            for f in all {
                if let Some(s) = evaluate_flows(g, &f, &state.margins, o, "sparq")? {
                    consider(s, &mut best);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
        let mut seen: Vec<FlowAssignment> = Vec::new();
        let budget = o.samples.max(1) + o.max_redraws;
        for draw in 0..budget {
            if (enumerated || draw >= o.samples.max(1)) && best.as_ref().is_some_and(|b| b.feasible) {
                break;
            }
            let f = d.sample(g, &mut rng);
            if seen.contains(&f) {
                continue;
            }
            seen.push(f.clone());
            if let Some(s) = evaluate_flows(g, &f, &state.margins, o, "sparq")? {
                consider(s, &mut best);
            }
        }
    }

    match best {
        Some(mut s) => {
            s.iterations = state.iteration;
            s.history = state.history;
            if !s.feasible {
                s.warnings.push("rounded solution violates a latency limit".into());
            }
            Ok(s)
        }
        None => infeasible(g, o, Some(&state), "no rounded embedding admits a feasible rate allocation"),
    }
}
