use sparq_core::optimizer::{solve_graph, SolveOptions};
use sparq_core::queueing::{LoadClass, QueueLoad};
use sparq_core::scenarios::experiment_a_scenario;
use sparq_core::simulator::stream_id;
use sparq_core::{build_augmented_graph, simulate_queue, simulate_solution, SimConfig};

#[test]
fn simulated_solution_matches_analytic_delays() {
    let g = build_augmented_graph(&experiment_a_scenario()).unwrap();
    let sol = solve_graph(&g, &SolveOptions::default()).unwrap();
    let report = simulate_solution(&g, &sol.flows, &sol.allocation, &SimConfig::default()).unwrap();
    assert!(report.max_relative_error() <= 0.05, "{}", report.max_relative_error());
    for c in report.commodities.iter().filter(|c| c.analytic_lt_s > 0.0) {
        let err = (c.lt_s - c.analytic_lt_s).abs() / c.analytic_lt_s;
        assert!(err <= 0.05, "{}: {} vs {}", c.commodity, c.lt_s, c.analytic_lt_s);
    }
}

#[test]
fn queues_draw_from_distinct_streams() {
    assert_ne!(stream_id("u->r1"), stream_id("r1->u"));
    let load = QueueLoad::new(vec![LoadClass::new(1.0, 50.0, 1.0)], 100.0);
    let cfg = SimConfig { horizon: 20_000, replications: 2, ..SimConfig::default() };
    let a = simulate_queue(&load, &cfg).unwrap();
    let b = simulate_queue(&load, &SimConfig { seed: 1, ..cfg.clone() }).unwrap();
    assert_ne!(a.sojourn[0].mean, b.sojourn[0].mean);
    let c = simulate_queue(&load, &cfg).unwrap();
    assert_eq!(a.sojourn[0].mean.to_bits(), c.sojourn[0].mean.to_bits());
}
