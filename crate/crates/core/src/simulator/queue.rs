use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::queueing::QueueLoad;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Arrivals per replication, warmup included.
    pub horizon: usize,
    /// Leading fraction of arrivals discarded as warmup.
    pub warmup_fraction: f64,
    pub replications: usize,
    pub seed: u64,
    /// Independent random stream; distinct queues use distinct streams.
    pub stream: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            horizon: 1_000_000,
            warmup_fraction: 0.1,
            replications: 5,
            seed: 0,
            stream: 0,
        }
    }
}

/// Mean and standard error across replications.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Estimate::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Estimate { mean, stderr: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate {
            mean,
            stderr: (var / n).sqrt(),
        }
    }

    /// True when `target` lies within `rel` of the mean.
    pub fn within(&self, target: f64, rel: f64) -> bool {
        (self.mean - target).abs() <= rel * target.abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueSimResult {
    /// Sojourn time per class, in the order of the load's classes.
    pub sojourn: Vec<Estimate>,
    pub wait: Vec<Estimate>,
    /// Sojourn time over all classes.
    pub overall_sojourn: Estimate,
    pub utilization: Estimate,
    /// Time-average number in system.
    pub in_system: Estimate,
    /// Measured arrival rate.
    pub arrival_rate: Estimate,
    pub rho_analytic: f64,
}

impl QueueSimResult {
    /// Relative gap between the time-average number in system and λW.
    pub fn little_gap(&self) -> f64 {
        let lw = self.arrival_rate.mean * self.overall_sojourn.mean;
        if lw == 0.0 {
            0.0
        } else {
            (self.in_system.mean - lw).abs() / lw
        }
    }
}

pub(crate) struct Arrivals {
    pub times: Vec<f64>,
    pub classes: Vec<usize>,
}

/// Merged Poisson stream, each arrival typed by class with probability
/// proportional to its rate.
pub(crate) fn draw_arrivals(load: &QueueLoad, n: usize, rng: &mut ChaCha8Rng) -> Arrivals {
    let lambdas: Vec<f64> = load.classes.iter().map(|c| c.lambda()).collect();
    let total: f64 = lambdas.iter().sum();
    let mut times = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        let x: f64 = Exp1.sample(rng);
        t += x / total;
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut c = lambdas.len() - 1;
        for (i, l) in lambdas.iter().enumerate() {
            acc += l;
            if u < acc {
                c = i;
                break;
            }
        }
        times.push(t);
        classes.push(c);
    }
    Arrivals { times, classes }
}

/// Per-customer results of one FCFS single-server run.
pub(crate) struct Served {
    pub sojourn: Vec<f64>,
    pub wait: Vec<f64>,
    /// Service start times.
    pub start: Vec<f64>,
}

/// First-come first-served single server with exponential service of rate
/// `μ / R_class`: each departure is `max(arrival, previous departure)` plus
/// the service time.
pub(crate) fn serve(load: &QueueLoad, arrivals: &Arrivals, rng: &mut ChaCha8Rng) -> Served {
    let n = arrivals.times.len();
    let mut sojourn = Vec::with_capacity(n);
    let mut wait = Vec::with_capacity(n);
    let mut start = Vec::with_capacity(n);
    let mut last_departure: f64 = 0.0;
    for i in 0..n {
        let a = arrivals.times[i];
        let r = load.classes[arrivals.classes[i]].requirement;
        let x: f64 = Exp1.sample(rng);
        let service = x * r / load.mu;
        let s = a.max(last_departure);
        last_departure = s + service;
        start.push(s);
        wait.push(s - a);
        sojourn.push(last_departure - a);
    }
    Served {
        sojourn,
        wait,
        start,
    }
}

struct Replication {
    sojourn: Vec<f64>,
    wait: Vec<f64>,
    overall: f64,
    utilization: f64,
    in_system: f64,
    arrival_rate: f64,
}

/// Derives a replication's generator from the base seed, the queue stream
/// and the replication index.
pub(crate) fn replication_rng(seed: u64, stream: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.rotate_left(17));
    rng.set_stream(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ rep);
    rng
}

fn replicate(load: &QueueLoad, cfg: &SimConfig, rep: u64) -> Replication {
    let mut rng = replication_rng(cfg.seed, cfg.stream, rep);
    let arrivals = draw_arrivals(load, cfg.horizon, &mut rng);
    let served = serve(load, &arrivals, &mut rng);
    let n = arrivals.times.len();
    let warm = ((n as f64) * cfg.warmup_fraction) as usize;
    let nc = load.classes.len();

    let mut sums = vec![0.0; nc];
    let mut waits = vec![0.0; nc];
    let mut counts = vec![0usize; nc];
    for i in warm..n {
        let c = arrivals.classes[i];
        sums[c] += served.sojourn[i];
        waits[c] += served.wait[i];
        counts[c] += 1;
    }
    let measured = (n - warm) as f64;
    let overall = sums.iter().sum::<f64>() / measured;

    // Observation window between the first and last measured arrival.
    let t0 = arrivals.times[warm];
    let t1 = arrivals.times[n - 1];
    let span = t1 - t0;
    let mut area = 0.0;
    let mut busy = 0.0;
    for i in 0..n {
        let a = arrivals.times[i];
        let d = a + served.sojourn[i];
        area += (d.min(t1) - a.max(t0)).max(0.0);
        busy += (d.min(t1) - served.start[i].max(t0)).max(0.0);
    }
    let per_class = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .zip(&counts)
            .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect()
    };
    Replication {
        sojourn: per_class(&sums),
        wait: per_class(&waits),
        overall,
        utilization: busy / span,
        in_system: area / span,
        arrival_rate: (n - warm - 1) as f64 / span,
    }
}

/// Simulates one queue; refuses loads with ρ ≥ 1.
pub fn simulate_queue(load: &QueueLoad, cfg: &SimConfig) -> Result<QueueSimResult> {
    let rho = load.utilization();
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    if cfg.horizon < 2 || cfg.replications == 0 || !(0.0..1.0).contains(&cfg.warmup_fraction) {
        return Err(Error::Domain("simulation needs at least two arrivals and one replication".into()));
    }
    let nc = load.classes.len();
    if load.total_lambda() == 0.0 {
        return Ok(QueueSimResult {
            sojourn: vec![Estimate::default(); nc],
            wait: vec![Estimate::default(); nc],
            overall_sojourn: Estimate::default(),
            utilization: Estimate::default(),
            in_system: Estimate::default(),
            arrival_rate: Estimate::default(),
            rho_analytic: 0.0,
        });
    }
    let reps: Vec<Replication> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| replicate(load, cfg, r))
        .collect();
    let column = |f: &dyn Fn(&Replication) -> f64| {
        Estimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
    };
    Ok(QueueSimResult {
        sojourn: (0..nc).map(|c| column(&|r| r.sojourn[c])).collect(),
        wait: (0..nc).map(|c| column(&|r| r.wait[c])).collect(),
        overall_sojourn: column(&|r| r.overall),
        utilization: column(&|r| r.utilization),
        in_system: column(&|r| r.in_system),
        arrival_rate: column(&|r| r.arrival_rate),
        rho_analytic: rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForkJoinResult {
    /// Per resource, the mean sojourn of the tracked class.
    pub per_resource: Vec<Estimate>,
    /// Largest per-resource mean.
    pub max_of_means: f64,
    /// Mean over requests of the slowest resource.
    pub mean_of_max: Estimate,
}

/// Requests that need several resources at once: every resource sees the
/// same arrivals, with independent service times. Reports, for class `k`,
/// both the largest mean and the mean of the per-request maximum.
pub fn simulate_fork_join(loads: &[QueueLoad], k: usize, cfg: &SimConfig) -> Result<ForkJoinResult> {
    let first = loads
        .first()
        .ok_or_else(|| Error::Domain("fork-join needs at least one resource".into()))?;
    for l in loads {
        let rho = l.utilization();
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        let same = l.classes.len() == first.classes.len()
            && l.classes.iter().zip(&first.classes).all(|(a, b)| a.lambda() == b.lambda());
        if !same {
            return Err(Error::Domain("fork-join resources must share arrivals".into()));
        }
    }
    let runs: Vec<(Vec<f64>, f64)> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(cfg.seed, cfg.stream, rep);
            let arrivals = draw_arrivals(first, cfg.horizon, &mut rng);
            let n = arrivals.times.len();
            let warm = ((n as f64) * cfg.warmup_fraction) as usize;
            let served: Vec<Served> = loads
                .iter()
                .enumerate()
                .map(|(r, l)| {
                    let mut rr = replication_rng(cfg.seed, cfg.stream ^ (r as u64 + 1) << 32, rep);
                    serve(l, &arrivals, &mut rr)
                })
                .collect();
            let mut means = vec![0.0; loads.len()];
            let mut max_sum = 0.0;
            let mut count = 0usize;
            for i in warm..n {
                if arrivals.classes[i] != k {
                    continue;
                }
                count += 1;
                let mut worst: f64 = 0.0;
                for (r, s) in served.iter().enumerate() {
                    means[r] += s.sojourn[i];
                    worst = worst.max(s.sojourn[i]);
                }
                max_sum += worst;
            }
            let c = count.max(1) as f64;
            (means.iter().map(|m| m / c).collect(), max_sum / c)
        })
        .collect();
    let per_resource: Vec<Estimate> = (0..loads.len())
        .map(|r| Estimate::from_samples(&runs.iter().map(|x| x.0[r]).collect::<Vec<_>>()))
        .collect();
    Ok(ForkJoinResult {
        max_of_means: per_resource.iter().map(|e| e.mean).fold(0.0, f64::max),
        per_resource,
        mean_of_max: Estimate::from_samples(&runs.iter().map(|x| x.1).collect::<Vec<_>>()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queueing::{mg1_components, mm1_sojourn, LoadClass};

    fn cfg(horizon: usize, seed: u64) -> SimConfig {
        SimConfig {
            horizon,
            seed,
            ..SimConfig::default()
        }
    }

    fn within_se(est: Estimate, target: f64, k: f64) -> bool {
        (est.mean - target).abs() <= k * est.stderr.max(1e-12)
    }

    fn two_class() -> QueueLoad {
        QueueLoad::new(
            vec![LoadClass::new(1.0, 10.0, 1.0), LoadClass::new(1.0, 10.0, 2.0)],
            40.0,
        )
    }

    #[test]
    fn seeded_runs_repeat() {
        let load = two_class();
        let a = simulate_queue(&load, &cfg(20_000, 3)).unwrap();
        let b = simulate_queue(&load, &cfg(20_000, 3)).unwrap();
        let c = simulate_queue(&load, &cfg(20_000, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn utilization_wait_and_little() {
        let load = two_class();
        let r = simulate_queue(&load, &cfg(400_000, 11)).unwrap();
        let pk = mg1_components(&load).unwrap();
        assert!(within_se(r.utilization, pk.rho, 3.0), "{:?}", r.utilization);
        for w in &r.wait {
            assert!(within_se(*w, pk.wait, 3.0), "{w:?} vs {}", pk.wait);
        }
        assert!(r.little_gap() < 0.01, "{}", r.little_gap());
    }

    #[test]
    fn mm1_mean() {
        let c = LoadClass::new(1.0, 50.0, 1.0);
        let r = simulate_queue(&QueueLoad::new(vec![c], 100.0), &cfg(200_000, 1)).unwrap();
        assert!(r.sojourn[0].within(mm1_sojourn(&c, 100.0).unwrap(), 0.05));
    }

    #[test]
    fn degenerate_and_unstable() {
        let idle = QueueLoad::new(vec![LoadClass::new(0.0, 10.0, 1.0)], 10.0);
        let r = simulate_queue(&idle, &cfg(100, 0)).unwrap();
        assert_eq!(r.sojourn[0], Estimate::default());
        let full = QueueLoad::new(vec![LoadClass::new(1.0, 10.0, 1.0)], 10.0);
        assert!(matches!(simulate_queue(&full, &cfg(100, 0)), Err(Error::Unstable { .. })));
        assert!(simulate_queue(&two_class(), &cfg(1, 0)).is_err());
    }

    #[test]
    fn mean_of_max_dominates_max_of_means() {
        let cpu = QueueLoad::new(vec![LoadClass::new(1.0, 10.0, 1.0)], 20.0);
        let gpu = QueueLoad::new(vec![LoadClass::new(1.0, 10.0, 2.0)], 50.0);
        let r = simulate_fork_join(&[cpu, gpu], 0, &cfg(200_000, 5)).unwrap();
        assert!(r.mean_of_max.mean >= r.max_of_means - 3.0 * r.mean_of_max.stderr);
        assert!(r.per_resource[0].within(0.1, 0.05));
        assert!(r.per_resource[1].within(1.0 / 15.0, 0.05));
    }
}
