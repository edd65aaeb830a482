use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sparq_core::scenarios::{save_scenario, small};
use sparq_core::QueueModel;

fn sparq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparq")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn link_scenario(dir: &Path) -> String {
    let p = dir.join("link.json");
    save_scenario(&small::single_link(QueueModel::SR, 1000.0, 1.0, 10.0, 1.0, 0.1), &p).unwrap();
    p.display().to_string()
}

#[test]
fn gen_experiment_writes_a_loadable_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nested/a.json");
    let o = sparq(&["gen-experiment", "a", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(sparq_core::scenarios::load_scenario(&p).is_ok());
}

#[test]
fn solve_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let s = link_scenario(dir.path());
    let out = dir.path().join("out");
    let o = sparq(&["solve", &s, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["solution.json", "delays.csv", "latency.csv", "iterations.json", "run.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let run = read_json(&out.join("run.json"));
    assert_eq!(run["command"], "solve");
    assert_eq!(run["seed"], 7);
    let doc = read_json(&out.join("solution.json"));
    assert!((doc["cost"].as_f64().unwrap() - 20.0).abs() < 1e-2);
    assert_eq!(doc["feasible"], true);
}

#[test]
fn simulate_reads_a_solution() {
    let dir = tempfile::tempdir().unwrap();
    let s = link_scenario(dir.path());
    let out = dir.path().join("out");
    assert_eq!(code(&sparq(&["solve", &s, "--out", out.to_str().unwrap()])), 0);
    let sim = dir.path().join("sim");
    let o = sparq(&[
        "simulate",
        out.join("solution.json").to_str().unwrap(),
        "--horizon",
        "20000",
        "--replications",
        "2",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sim.join("simulation.csv").exists());
    assert_eq!(read_json(&sim.join("run.json"))["command"], "simulate");
}

#[test]
fn saturated_baseline_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let s = link_scenario(dir.path());
    let out = dir.path().join("out");
    let o = sparq(&["baseline", &s, "--alpha", "1.0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(out.join("solution.json").exists());
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = sparq(&["solve", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.json"));
}

#[test]
fn sweep_writes_one_row_per_method_and_value() {
    let dir = tempfile::tempdir().unwrap();
    let s = link_scenario(dir.path());
    let out = dir.path().join("out");
    let o = sparq(&[
        "sweep",
        &s,
        "--param",
        "services.s.arrival_rate",
        "--values",
        "5:15:5",
        "--alphas",
        "1.5,2",
        "--samples",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert!(out.join("tradeoff.csv").exists());
}
