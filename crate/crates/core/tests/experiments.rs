use sparq_core::optimizer::{solve_graph, Solution, SolveOptions};
use sparq_core::queueing::within_limit;
use sparq_core::scenarios::{experiment_a_scenario, experiment_b_scenario, small, SweepParam};
use sparq_core::{build_augmented_graph, Scenario};

fn solve(s: &Scenario) -> (Solution, Vec<String>) {
    let g = build_augmented_graph(s).unwrap();
    let sol = solve_graph(&g, &SolveOptions { samples: 16, ..SolveOptions::default() }).unwrap();
    let active = sol.active_compute(&g);
    (sol, active)
}

fn with(mut s: Scenario, p: SweepParam, v: f64) -> Scenario {
    p.apply(&mut s, v).unwrap();
    s
}

fn assert_within_limits(sol: &Solution) {
    assert!(sol.feasible);
    for c in sol.delays.commodities.iter().filter(|c| c.limit_s.is_finite()) {
        assert!(within_limit(c.lt_s, c.limit_s), "{} at {} over {}", c.commodity, c.lt_s, c.limit_s);
    }
}

#[test]
fn light_load_stays_on_the_cloud() {
    let (sol, active) = solve(&experiment_a_scenario());
    assert_within_limits(&sol);
    assert_eq!(active, ["p(n,cloud)"]);
}

#[test]
fn heavy_load_opens_the_edge() {
    let s = with(experiment_a_scenario(), SweepParam::ArrivalRate("phi2".into()), 1800.0);
    let (sol, active) = solve(&s);
    assert_within_limits(&sol);
    assert!(active.iter().any(|a| a == "p(e,edge)"), "{active:?}");
}

#[test]
fn tight_limit_avoids_the_user_device() {
    let s = with(experiment_b_scenario(), SweepParam::LatencyLimit("k8".into()), 0.08);
    let (sol, active) = solve(&s);
    assert_within_limits(&sol);
    assert!(!active.iter().any(|a| a == "p(v,render_v)"), "{active:?}");
}

#[test]
fn loose_limit_renders_on_the_user_device() {
    let s = with(experiment_b_scenario(), SweepParam::LatencyLimit("k8".into()), 0.16);
    let (sol, active) = solve(&s);
    assert_within_limits(&sol);
    assert!(active.iter().any(|a| a == "p(v,render_v)"), "{active:?}");
}

#[test]
fn triangle_solutions_are_reproducible_and_consistent() {
    let g = build_augmented_graph(&small::triangle()).unwrap();
    let o = SolveOptions::default();
    let a = solve_graph(&g, &o).unwrap();
    let b = solve_graph(&g, &o).unwrap();
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    assert_eq!(a.flows, b.flows);
    assert!(a.flows.is_integral(0.0));
    assert_eq!(sparq_core::model::flow_violation(&g, &a.flows), 0.0);
    for (q, m) in g.queues.iter().zip(&a.allocation.rates) {
        assert!(*m <= q.capacity * (1.0 + 1e-9));
    }
    assert_within_limits(&a);
}
