use crate::{Error, Result};

/// One commodity's share of a queue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadClass {
    /// Fraction of the service's requests routed through the queue.
    pub flow: f64,
    /// Service arrival rate Λ (requests per second).
    pub arrival_rate: f64,
    /// Resource units per request.
    pub requirement: f64,
}

impl LoadClass {
    pub fn new(flow: f64, arrival_rate: f64, requirement: f64) -> Self {
        LoadClass {
            flow,
            arrival_rate,
            requirement,
        }
    }

    /// Poisson arrival rate of this class.
    pub fn lambda(&self) -> f64 {
        self.flow * self.arrival_rate
    }

    /// Offered work in resource units per second.
    pub fn work(&self) -> f64 {
        self.lambda() * self.requirement
    }

    fn check(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.flow) || self.flow > 1.0 + 1e-9 {
            return Err(Error::Domain(format!("flow {} outside [0, 1]", self.flow)));
        }
        if !ok(self.arrival_rate) {
            return Err(Error::Domain(format!("arrival rate {}", self.arrival_rate)));
        }
        if !ok(self.requirement) {
            return Err(Error::Domain(format!("requirement {}", self.requirement)));
        }
        Ok(())
    }
}

/// Classes sharing one server of rate `mu`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueLoad {
    pub classes: Vec<LoadClass>,
    pub mu: f64,
}

impl QueueLoad {
    pub fn new(classes: Vec<LoadClass>, mu: f64) -> Self {
        QueueLoad { classes, mu }
    }

    pub fn total_work(&self) -> f64 {
        self.classes.iter().map(LoadClass::work).sum()
    }

    pub fn total_lambda(&self) -> f64 {
        self.classes.iter().map(LoadClass::lambda).sum()
    }

    /// ρ = Σ λ_j R_j / μ; infinite when work arrives at a zero-rate server.
    pub fn utilization(&self) -> f64 {
        let w = self.total_work();
        if w == 0.0 {
            0.0
        } else if self.mu <= 0.0 {
            f64::INFINITY
        } else {
            w / self.mu
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::Domain(format!("service rate {}", self.mu)));
        }
        self.classes.iter().try_for_each(LoadClass::check)
    }

    fn stable_rho(&self) -> Result<f64> {
        let rho = self.utilization();
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(rho)
    }
}

/// Mean sojourn time of an M/M/1 queue dedicated to one class:
/// `R / (μ − λR)`.
pub fn mm1_sojourn(class: &LoadClass, mu: f64) -> Result<f64> {
    let load = QueueLoad::new(vec![*class], mu);
    load.check()?;
    if class.requirement == 0.0 {
        return Ok(0.0);
    }
    load.stable_rho()?;
    Ok(class.requirement / (mu - class.work()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mg1Components {
    /// Total Poisson arrival rate λ.
    pub lambda: f64,
    /// Second moment of the mixed service time E[X²].
    pub second_moment: f64,
    pub rho: f64,
    /// Mean waiting time λE[X²] / (2(1 − ρ)).
    pub wait: f64,
}

/// Mixture moments and Pollaczek-Khinchine waiting time of a shared M/G/1
/// queue with exponential per-class service. With no arrivals the second
/// moment and the wait are zero.
pub fn mg1_components(load: &QueueLoad) -> Result<Mg1Components> {
    load.check()?;
    let lambda = load.total_lambda();
    if lambda == 0.0 {
        return Ok(Mg1Components {
            lambda: 0.0,
            second_moment: 0.0,
            rho: 0.0,
            wait: 0.0,
        });
    }
    let rho = load.stable_rho()?;
    let second_moment = 2.0
        * load
            .classes
            .iter()
            .map(|c| (c.lambda() / lambda) * (c.requirement / load.mu).powi(2))
            .sum::<f64>();
    let wait = lambda * second_moment / (2.0 * (1.0 - rho));
    Ok(Mg1Components {
        lambda,
        second_moment,
        rho,
        wait,
    })
}

/// Mean sojourn time of class `k` in a shared M/G/1 queue:
/// `Σ_j λ_j R_j² / (μ(μ − Σ_j λ_j R_j)) + R_k/μ`.
pub fn mg1_sojourn(load: &QueueLoad, k: usize) -> Result<f64> {
    load.check()?;
    let own = load
        .classes
        .get(k)
        .ok_or_else(|| Error::Domain(format!("class {k} out of range")))?;
    if own.requirement == 0.0 {
        return Ok(0.0);
    }
    load.stable_rho()?;
    let mu = load.mu;
    let a: f64 = load.classes.iter().map(|c| c.lambda() * c.requirement.powi(2)).sum();
    Ok(a / (mu * (mu - load.total_work())) + own.requirement / mu)
}

/// Computation delay under per-commodity queues: the slowest resource.
pub fn comp_delay_gr(per_resource: &[(LoadClass, f64)]) -> Result<f64> {
    per_resource
        .iter()
        .try_fold(0.0_f64, |acc, (c, mu)| Ok(acc.max(mm1_sojourn(c, *mu)?)))
}

/// Computation delay under shared queues: the slowest resource for class `k`.
pub fn comp_delay_sr(per_resource: &[QueueLoad], k: usize) -> Result<f64> {
    per_resource
        .iter()
        .try_fold(0.0_f64, |acc, q| Ok(acc.max(mg1_sojourn(q, k)?)))
}

/// ε-bound on the sojourn time of class `k`:
/// `Σ_j λ_j R_j² / (ε μ²) + R_k/μ`.
///
/// Valid while ρ ≤ 1 − ε, where it upper-bounds [`mg1_sojourn`] and meets it
/// with equality at ρ = 1 − ε. A load violating that precondition is
/// rejected as [`Error::InconsistentMargin`].
pub fn eps_bound_sojourn(load: &QueueLoad, k: usize, eps: f64) -> Result<f64> {
    let value = eps_bound_unchecked(load, k, eps)?;
    let rho = load.utilization();
    if rho > 1.0 - eps + 1e-9 {
        return Err(Error::InconsistentMargin { rho, eps });
    }
    Ok(value)
}

/// The ε-bound formula without the ρ ≤ 1 − ε precondition.
pub fn eps_bound_unchecked(load: &QueueLoad, k: usize, eps: f64) -> Result<f64> {
    load.check()?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("epsilon {eps} outside (0, 1]")));
    }
    let own = load
        .classes
        .get(k)
        .ok_or_else(|| Error::Domain(format!("class {k} out of range")))?;
    if own.requirement == 0.0 {
        return Ok(0.0);
    }
    let mu = load.mu;
    if mu <= 0.0 {
        return Err(Error::Unstable { rho: f64::INFINITY });
    }
    let a: f64 = load.classes.iter().map(|c| c.lambda() * c.requirement.powi(2)).sum();
    Ok(a / (eps * mu * mu) + own.requirement / mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Two classes at Λ = 10 with R = 1 and 2 on μ = 40.
    fn two_class() -> QueueLoad {
        QueueLoad::new(
            vec![LoadClass::new(1.0, 10.0, 1.0), LoadClass::new(1.0, 10.0, 2.0)],
            40.0,
        )
    }

    #[test]
    fn mm1_examples() {
        let idle = mm1_sojourn(&LoadClass::new(0.0, 10.0, 1.0), 100.0).unwrap();
        assert!(close(idle, 0.010, 1e-15));
        let half = mm1_sojourn(&LoadClass::new(1.0, 50.0, 1.0), 100.0).unwrap();
        assert!(close(half, 0.020, 1e-15));
        let full = mm1_sojourn(&LoadClass::new(1.0, 100.0, 1.0), 100.0);
        assert!(matches!(full, Err(Error::Unstable { .. })));
    }

    #[test]
    fn mm1_in_units_of_requirement() {
        // ν = μ/R = 25/s, λ = 5/s.
        let d = mm1_sojourn(&LoadClass::new(0.5, 10.0, 4.0), 100.0).unwrap();
        assert!(close(d, 1.0 / 20.0, 1e-15));
    }

    #[test]
    fn mg1_components_two_class() {
        let c = mg1_components(&two_class()).unwrap();
        assert!(close(c.rho, 0.75, 1e-15));
        assert!(close(c.second_moment, 3.125e-3, 1e-15));
        assert!(close(c.lambda, 20.0, 1e-15));
        assert!(close(c.wait, 0.125, 1e-12));
    }

    #[test]
    fn mg1_components_single_and_empty() {
        let single = QueueLoad::new(vec![LoadClass::new(1.0, 30.0, 1.0)], 50.0);
        let c = mg1_components(&single).unwrap();
        assert!(close(c.second_moment, 2.0 / 2500.0, 1e-15));
        assert!(close(c.rho, 0.6, 1e-15));

        let empty = QueueLoad::new(vec![LoadClass::new(0.0, 30.0, 1.0)], 50.0);
        let c = mg1_components(&empty).unwrap();
        assert_eq!((c.rho, c.second_moment, c.lambda, c.wait), (0.0, 0.0, 0.0, 0.0));

        assert!(matches!(
            mg1_components(&QueueLoad::new(vec![], -1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mg1_sojourn_two_class() {
        let load = two_class();
        let d1 = mg1_sojourn(&load, 0).unwrap();
        let d2 = mg1_sojourn(&load, 1).unwrap();
        assert!(close(d1, 0.150, 1e-12));
        assert!(close(d2, 0.175, 1e-12));
    }

    #[test]
    fn mg1_idle_is_service_time() {
        let load = QueueLoad::new(
            vec![LoadClass::new(0.0, 10.0, 1.0), LoadClass::new(0.0, 10.0, 2.0)],
            40.0,
        );
        assert!(close(mg1_sojourn(&load, 1).unwrap(), 0.05, 1e-15));
    }

    #[test]
    fn mg1_unstable() {
        let load = QueueLoad::new(vec![LoadClass::new(1.0, 40.0, 1.0)], 40.0);
        assert!(matches!(mg1_sojourn(&load, 0), Err(Error::Unstable { .. })));
    }

    #[test]
    fn computation_delay_takes_slowest_resource() {
        let a = (LoadClass::new(1.0, 50.0, 1.0), 100.0);
        let b = (LoadClass::new(1.0, 10.0, 1.0), 110.0);
        let unused = (LoadClass::new(1.0, 10.0, 0.0), 1.0);
        let d = comp_delay_gr(&[a, b, unused]).unwrap();
        assert!(close(d, 0.020, 1e-15));
        assert_eq!(comp_delay_gr(&[a]).unwrap(), mm1_sojourn(&a.0, a.1).unwrap());

        let fast = QueueLoad::new(
            vec![LoadClass::new(1.0, 10.0, 1.0), LoadClass::new(1.0, 10.0, 2.0)],
            400.0,
        );
        let d = comp_delay_sr(&[two_class(), fast.clone()], 0).unwrap();
        assert!(close(d, 0.150, 1e-12));
        assert_eq!(comp_delay_sr(&[fast.clone()], 0).unwrap(), mg1_sojourn(&fast, 0).unwrap());
    }

    #[test]
    fn bound_examples() {
        let load = two_class();
        let b = eps_bound_sojourn(&load, 0, 0.25).unwrap();
        assert!(close(b, 0.150, 1e-12));
        assert!(close(b, mg1_sojourn(&load, 0).unwrap(), 1e-12));
        assert!(matches!(
            eps_bound_sojourn(&load, 0, 0.5),
            Err(Error::InconsistentMargin { .. })
        ));
        let idle = QueueLoad::new(vec![LoadClass::new(0.0, 10.0, 2.0)], 40.0);
        assert!(close(eps_bound_sojourn(&idle, 0, 0.5).unwrap(), 0.05, 1e-15));
        assert!(eps_bound_sojourn(&idle, 0, 1.0).is_ok());
        for eps in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(eps_bound_sojourn(&idle, 0, eps), Err(Error::Domain(_))));
        }
    }

    fn loads() -> impl Strategy<Value = QueueLoad> {
        (
            prop::collection::vec((0.0..=1.0f64, 0.1..100.0f64, 0.01..5.0f64), 1..6),
            0.05..0.95f64,
        )
            .prop_map(|(cs, rho)| {
                let classes: Vec<LoadClass> =
                    cs.into_iter().map(|(f, l, r)| LoadClass::new(f, l, r)).collect();
                let work: f64 = classes.iter().map(LoadClass::work).sum();
                let mu = if work > 0.0 { work / rho } else { 1.0 };
                QueueLoad::new(classes, mu)
            })
    }

    proptest! {
        #[test]
        fn single_class_mg1_is_mm1(f in 0.0..=1.0f64, l in 0.1..100.0f64, r in 0.01..5.0f64, rho in 0.0..0.99f64) {
            let c = LoadClass::new(f, l, r);
            let mu = if c.work() > 0.0 { c.work() / rho.max(1e-3) } else { 1.0 };
            let a = mg1_sojourn(&QueueLoad::new(vec![c], mu), 0).unwrap();
            let b = mm1_sojourn(&c, mu).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }

        #[test]
        fn pk_paths_agree(load in loads()) {
            let c = mg1_components(&load).unwrap();
            for k in 0..load.classes.len() {
                let direct = mg1_sojourn(&load, k).unwrap() - load.classes[k].requirement / load.mu;
                prop_assert!((direct - c.wait).abs() <= 1e-12 * c.wait.max(1.0));
            }
        }

        #[test]
        fn bound_tight_at_one_minus_rho(load in loads()) {
            let rho = load.utilization();
            prop_assume!(rho > 0.0);
            for k in 0..load.classes.len() {
                let exact = mg1_sojourn(&load, k).unwrap();
                let bound = eps_bound_sojourn(&load, k, 1.0 - rho).unwrap();
                prop_assert!((exact - bound).abs() <= 1e-12 * exact.max(1.0));
            }
        }

        #[test]
        fn bound_dominates(load in loads(), t in 0.0..1.0f64) {
            let rho = load.utilization();
            let eps = (1.0 - rho) * t.max(1e-3);
            for k in 0..load.classes.len() {
                let exact = mg1_sojourn(&load, k).unwrap();
                let bound = eps_bound_sojourn(&load, k, eps).unwrap();
                prop_assert!(bound >= exact * (1.0 - 1e-12));
            }
        }

        #[test]
        fn monotone_in_rate_and_load(load in loads(), up in 1.01..2.0f64, which in 0usize..6) {
            let k = which % load.classes.len();
            let eps = 0.5 * (1.0 - load.utilization());
            let exact = mg1_sojourn(&load, k).unwrap();
            let bound = eps_bound_sojourn(&load, k, eps).unwrap();

            let faster = QueueLoad::new(load.classes.clone(), load.mu * up);
            prop_assert!(mg1_sojourn(&faster, k).unwrap() < exact);
            prop_assert!(eps_bound_unchecked(&faster, k, eps).unwrap() < bound);

            // More traffic on one class, kept stable.
            let mut heavier = load.clone();
            let c = &mut heavier.classes[k];
            c.arrival_rate *= up;
            prop_assume!(heavier.utilization() < 0.99);
            prop_assert!(mg1_sojourn(&heavier, k).unwrap() >= exact);
            prop_assert!(eps_bound_unchecked(&heavier, k, eps).unwrap() >= bound);
        }
    }
}
