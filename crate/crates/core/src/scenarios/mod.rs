//! Scenario files, the built-in experiments, parameter sweeps and
//! cost-latency trade-off output.

mod experiments;
pub mod small;
mod sweep;

use std::path::Path;

pub use experiments::{
    experiment_a_scenario, experiment_b_scenario, EXPERIMENT_A_CLOUD_COST, EXPERIMENT_A_Q,
    EXPERIMENT_B_CPU, EXPERIMENT_B_USER_SHARE,
};
pub use sweep::{
    emit_tradeoff, run_sweep, tradeoff_rows, SweepParam, SweepResult, SweepRow, SweepSpec,
    TradeoffRow,
};

use crate::model::Scenario;
use crate::Result;

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, s.to_json()?)?;
    Ok(())
}

/// Rounding draws per sweep point; the cheapest feasible one is kept.
pub const SWEEP_SAMPLES: usize = 16;

/// Default sweep of experiment A: the second service's request rate.
pub fn experiment_a_sweep() -> SweepSpec {
    let mut spec = SweepSpec::new(
        SweepParam::ArrivalRate("phi2".into()),
        (0..=17).map(|i| 300.0 + 100.0 * i as f64).collect(),
        vec![1.0, 1.2, 1.4, 1.6],
    );
    spec.options.samples = SWEEP_SAMPLES;
    spec
}

/// Default sweep of experiment B: the latency limit of the rendered stream.
pub fn experiment_b_sweep() -> SweepSpec {
    let mut spec = SweepSpec::new(
        SweepParam::LatencyLimit("k8".into()),
        (0..=12).map(|i| 0.08 + 0.01 * i as f64).collect(),
        vec![1.0, 1.3, 1.6, 1.9],
    );
    spec.options.samples = SWEEP_SAMPLES;
    spec
}
