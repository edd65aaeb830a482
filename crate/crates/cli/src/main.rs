use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sparq_core::model::AugmentedGraph;
use sparq_core::optimizer::{baseline_graph, solve_graph, SolutionDocument};
use sparq_core::scenarios::{
    emit_tradeoff, experiment_a_scenario, experiment_b_scenario, load_scenario, run_sweep,
    save_scenario, SweepParam, SweepSpec, SWEEP_SAMPLES,
};
use sparq_core::{build_augmented_graph, simulate_solution, Scenario, SimConfig, Solution, SolveOptions};

#[derive(Parser)]
#[command(name = "sparq", version, about = "Joint placement, routing and rate allocation for service graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct SolveArgs {
    /// Seed for randomized rounding.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rounding draws; the cheapest feasible one is kept.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

impl SolveArgs {
    fn options(&self, default_samples: usize) -> SolveOptions {
        SolveOptions {
            seed: self.seed,
            samples: self.samples.unwrap_or(default_samples),
            max_iterations: self.max_iterations,
            ..SolveOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solves a scenario with SCA and randomized rounding.
    Solve {
        scenario: PathBuf,
        #[command(flatten)]
        opts: SolveArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweeps an arrival rate or latency limit, with baselines at each point.
    Sweep {
        scenario: PathBuf,
        /// `services.<id>.arrival_rate` or `commodities.<id>.latency_limit`.
        #[arg(long)]
        param: String,
        /// Inclusive range `a:b:step`.
        #[arg(long)]
        values: String,
        /// Comma-separated over-allocation factors for the baseline.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[command(flatten)]
        opts: SolveArgs,
        /// Concurrent sweep points; zero uses all cores.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulates a solution file and compares with the analytic delays.
    Simulate {
        solution: PathBuf,
        /// Arrivals per replication and queue.
        #[arg(long, default_value_t = 1_000_000)]
        horizon: usize,
        #[arg(long, default_value_t = 5)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario file, needed when the solution does not embed one.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Private-delay baseline with over-allocation factor `alpha`.
    Baseline {
        scenario: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        opts: SolveArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Writes a built-in experiment scenario.
    GenExperiment {
        which: Experiment,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    A,
    B,
}

/// Outcome of a command that completed without error.
enum Status {
    Ok,
    Infeasible,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<Status> {
    match cmd {
        Command::Solve { scenario, opts, out } => {
            let s = read_scenario(&scenario)?;
            let o = opts.options(1);
            let g = build_augmented_graph(&s)?;
            let sol = solve_graph(&g, &o)?;
            finish_solution(&g, &s, &sol, &out, "solve", &scenario, &o)
        }
        Command::Baseline { scenario, alpha, opts, out } => {
            let s = read_scenario(&scenario)?;
            let o = opts.options(1);
            let g = build_augmented_graph(&s)?;
            let sol = baseline_graph(&g, alpha, &o)?;
            finish_solution(&g, &s, &sol, &out, "baseline", &scenario, &o)
        }
        Command::Sweep { scenario, param, values, alphas, opts, workers, out } => {
            let s = read_scenario(&scenario)?;
            let parameter: SweepParam = param.parse()?;
            let mut spec = SweepSpec::new(parameter, SweepSpec::parse_range(&values)?, alphas);
            spec.options = opts.options(SWEEP_SAMPLES);
            spec.workers = workers;
            let result = run_sweep(&s, &spec)?;
            fs::create_dir_all(&out)?;
            result.write_csv(create(&out.join("sweep.csv"))?)?;
            emit_tradeoff(&result, create(&out.join("tradeoff.csv"))?)?;
            write_manifest(&out, "sweep", &scenario, &spec.options, json!({ "sweep": spec }))?;
            for r in result.rows_for("sparq") {
                let lt: Vec<String> = r.latency.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
                println!(
                    "{:>10} cost={:<12.4} feasible={:<5} {} active=[{}]",
                    r.value,
                    r.cost,
                    r.feasible,
                    lt.join(" "),
                    r.active_compute.join(",")
                );
            }
            let any = result.rows_for("sparq").any(|r| r.feasible);
            Ok(if any { Status::Ok } else { Status::Infeasible })
        }
        Command::Simulate { solution, horizon, replications, seed, scenario, out } => {
            let text = fs::read_to_string(&solution)
                .with_context(|| format!("reading {}", solution.display()))?;
            let doc: SolutionDocument = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", solution.display()))?;
            let s = match (&scenario, &doc.scenario) {
                (Some(p), _) => read_scenario(p)?,
                (None, Some(s)) => s.clone(),
                (None, None) => bail!("solution embeds no scenario; pass --scenario"),
            };
            let g = build_augmented_graph(&s)?;
            let (flows, alloc, _) = doc.state(&g)?;
            let cfg = SimConfig {
                horizon,
                replications,
                seed,
                ..SimConfig::default()
            };
            let report = simulate_solution(&g, &flows, &alloc, &cfg)?;
            fs::create_dir_all(&out)?;
            report.write_csv(create(&out.join("simulation.csv"))?)?;
            serde_json::to_writer_pretty(create(&out.join("simulation.json"))?, &report)?;
            write_manifest(&out, "simulate", &solution, &cfg, json!({}))?;
            for c in report.commodities.iter().filter(|c| c.lt_s > 0.0) {
                println!(
                    "{:<8} lT simulated {:.6} ± {:.6} s, analytic {:.6} s",
                    c.commodity, c.lt_s, c.stderr_s, c.analytic_lt_s
                );
            }
            println!("largest relative error per queue: {:.4}", report.max_relative_error());
            Ok(Status::Ok)
        }
        Command::GenExperiment { which, out } => {
            let s = match which {
                Experiment::A => experiment_a_scenario(),
                Experiment::B => experiment_b_scenario(),
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            save_scenario(&s, &out)?;
            println!("wrote {}", out.display());
            Ok(Status::Ok)
        }
    }
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    load_scenario(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn finish_solution(
    g: &AugmentedGraph,
    s: &Scenario,
    sol: &Solution,
    out: &Path,
    command: &str,
    input: &Path,
    o: &SolveOptions,
) -> Result<Status> {
    fs::create_dir_all(out)?;
    serde_json::to_writer_pretty(create(&out.join("solution.json"))?, &sol.to_document(g, Some(s)))?;
    sol.delays.write_queue_csv(create(&out.join("delays.csv"))?)?;
    sol.delays.write_latency_csv(create(&out.join("latency.csv"))?)?;
    if !sol.history.is_empty() {
        serde_json::to_writer_pretty(create(&out.join("iterations.json"))?, &sol.history)?;
    }
    write_manifest(out, command, input, o, json!({ "method": sol.method }))?;

    println!("method      {}", sol.method);
    println!("cost        {:.6}", sol.cost);
    println!("feasible    {}", sol.feasible);
    println!("iterations  {}", sol.iterations);
    println!("active      {}", sol.active_compute(g).join(", "));
    for c in sol.delays.commodities.iter().filter(|c| c.limit_s.is_finite()) {
        println!("{:<8} lT = {:.6} s (limit {:.6} s)", c.commodity, c.lt_s, c.limit_s);
    }
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if sol.feasible { Status::Ok } else { Status::Infeasible })
}

fn write_manifest<O: Serialize>(
    out: &Path,
    command: &str,
    input: &Path,
    options: &O,
    extra: serde_json::Value,
) -> Result<()> {
    let options = serde_json::to_value(options)?;
    let manifest = json!({
        "command": command,
        "input": input.display().to_string(),
        "seed": options["seed"],
        "options": options,
        "versions": {
            "sparq-cli": env!("CARGO_PKG_VERSION"),
            "sparq-core": sparq_core::VERSION,
        },
        "extra": extra,
    });
    serde_json::to_writer_pretty(create(&out.join("run.json"))?, &manifest)?;
    Ok(())
}
