use std::io::Write;

use serde::{Deserialize, Serialize};

use super::formulas::{eps_bound_unchecked, mg1_sojourn, mm1_sojourn, LoadClass, QueueLoad};
use crate::model::{Allocation, AugmentedGraph, FlowAssignment, QueueModel, SafetyMargins};
use crate::{Error, Result};

/// Relative tolerance when comparing a latency to its limit.
pub const LATENCY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DelayMode {
    /// Exact M/M/1 and M/G/1 sojourn times.
    Exact,
    /// ε-bound sojourn times.
    Bound,
}

/// Load seen by queue `q`, together with the class index of each commodity.
pub fn queue_load(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    mu: f64,
    q: usize,
) -> (QueueLoad, Vec<usize>) {
    let queue = &g.queues[q];
    let edge = &g.edges[queue.edge];
    let mut classes = Vec::new();
    let mut members = Vec::new();
    let ks: Vec<usize> = match queue.commodity {
        Some(k) => vec![k],
        None => (0..g.commodities.len()).collect(),
    };
    for k in ks {
        let r = edge.requirement(k, queue.resource);
        if r > 0.0 && edge.allowed[k] {
            classes.push(LoadClass::new(
                flows.get(queue.edge, k).clamp(0.0, 1.0),
                g.commodities[k].arrival_rate,
                r,
            ));
            members.push(k);
        }
    }
    (QueueLoad::new(classes, mu), members)
}

/// Utilization of every queue.
pub fn utilizations(g: &AugmentedGraph, flows: &FlowAssignment, alloc: &Allocation) -> Vec<f64> {
    (0..g.queues.len())
        .map(|q| queue_load(g, flows, alloc.rates[q], q).0.utilization())
        .collect()
}

/// Offered work per queue (resource units per second).
pub fn queue_work(g: &AugmentedGraph, flows: &FlowAssignment) -> Vec<f64> {
    (0..g.queues.len())
        .map(|q| queue_load(g, flows, 0.0, q).0.total_work())
        .collect()
}

/// Sojourn time of commodity `k` in queue `q`.
pub fn queue_delay(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    alloc: &Allocation,
    margins: &SafetyMargins,
    q: usize,
    k: usize,
    mode: DelayMode,
) -> Result<f64> {
    let (load, members) = queue_load(g, flows, alloc.rates[q], q);
    let Some(idx) = members.iter().position(|&m| m == k) else {
        return Ok(0.0);
    };
    match mode {
        DelayMode::Exact => match g.queues[q].model {
            QueueModel::GR => mm1_sojourn(&load.classes[idx], load.mu),
            QueueModel::SR => mg1_sojourn(&load, idx),
        },
        DelayMode::Bound => eps_bound_unchecked(&load, idx, margins.eps[q]),
    }
}

/// Delay of commodity `k` on edge `e`: the slowest of its queues.
pub fn edge_delay(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    alloc: &Allocation,
    margins: &SafetyMargins,
    e: usize,
    k: usize,
    mode: DelayMode,
) -> Result<f64> {
    g.edges[e].queues.iter().try_fold(0.0_f64, |acc, &q| {
        Ok(acc.max(queue_delay(g, flows, alloc, margins, q, k, mode)?))
    })
}

/// JSON has no infinity: unbounded delays and limits are written as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod vec {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let xs: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
            xs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let xs = Vec::<Option<f64>>::deserialize(d)?;
            Ok(xs.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueDelayRow {
    pub edge: String,
    pub commodity: String,
    pub resource: String,
    #[serde(with = "unbounded")]
    pub delay_s: f64,
    #[serde(with = "unbounded")]
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommodityLatency {
    pub commodity: String,
    /// Delay accumulated on the commodity's own paths.
    #[serde(with = "unbounded")]
    pub l_s: f64,
    /// Delay including the slowest input chain.
    #[serde(rename = "lT_s", with = "unbounded")]
    pub lt_s: f64,
    #[serde(with = "unbounded")]
    pub limit_s: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub mode: DelayMode,
    pub queues: Vec<QueueDelayRow>,
    pub commodities: Vec<CommodityLatency>,
    /// Utilization per queue.
    #[serde(with = "unbounded::vec")]
    pub utilization: Vec<f64>,
    /// Labels of queues with ρ ≥ 1 under the given allocation.
    pub unstable: Vec<String>,
}

impl DelayReport {
    pub fn feasible(&self) -> bool {
        self.unstable.is_empty() && self.commodities.iter().all(|c| c.feasible)
    }

    pub fn latency(&self, commodity: &str) -> Option<&CommodityLatency> {
        self.commodities.iter().find(|c| c.commodity == commodity)
    }

    /// `edge,commodity,resource,delay_s,rho`
    pub fn write_queue_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.queues {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `commodity,l_s,lT_s,limit_s,feasible`
    pub fn write_latency_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.commodities {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-commodity path delay and the recursive end-to-end latency. Unstable
/// queues give infinite delay and are listed in the report rather than
/// returned as an error.
pub fn end_to_end_latency(
    g: &AugmentedGraph,
    flows: &FlowAssignment,
    alloc: &Allocation,
    margins: &SafetyMargins,
    mode: DelayMode,
) -> Result<DelayReport> {
    let nk = g.commodities.len();
    let mut own = vec![0.0_f64; nk];
    let mut rows = Vec::new();
    let mut unstable = Vec::new();
    let utilization = utilizations(g, flows, alloc);

    for (q, queue) in g.queues.iter().enumerate() {
        let (load, members) = queue_load(g, flows, alloc.rates[q], q);
        if load.total_lambda() > 0.0 && utilization[q] >= 1.0 {
            unstable.push(g.queue_label(q));
        }
        for &k in &members {
            let f = flows.get(queue.edge, k);
            if f <= 0.0 {
                continue;
            }
            let d = match queue_delay(g, flows, alloc, margins, q, k, mode) {
                Ok(d) => d,
                Err(Error::Unstable { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            rows.push(QueueDelayRow {
                edge: g.edges[queue.edge].label.clone(),
                commodity: g.commodities[k].id.clone(),
                resource: g.resources[queue.resource].clone(),
                delay_s: d,
                rho: utilization[q],
            });
        }
    }

    // Per edge take the slowest resource, weighted by the flow fraction.
    for (e, edge) in g.edges.iter().enumerate() {
        if !edge.has_queues() {
            continue;
        }
        for k in 0..nk {
            let f = flows.get(e, k);
            if f <= 0.0 || !edge.delays(k) {
                continue;
            }
            let d = match edge_delay(g, flows, alloc, margins, e, k, mode) {
                Ok(d) => d,
                Err(Error::Unstable { .. }) => f64::INFINITY,
                Err(err) => return Err(err),
            };
            own[k] += f * d;
        }
    }

    let total = latency_recursion(g, &own);
    let commodities = (0..nk)
        .map(|k| {
            let limit = g.commodities[k].latency_limit;
            CommodityLatency {
                commodity: g.commodities[k].id.clone(),
                l_s: own[k],
                lt_s: total[k],
                limit_s: limit,
                feasible: within_limit(total[k], limit),
            }
        })
        .collect();

    Ok(DelayReport {
        mode,
        queues: rows,
        commodities,
        utilization,
        unstable,
    })
}

/// `l_T^k = l^k + max_{j ∈ inputs(k)} l_T^j`, with `l_T^k = l^k` for source
/// commodities.
pub fn latency_recursion(g: &AugmentedGraph, own: &[f64]) -> Vec<f64> {
    let mut total = vec![0.0; own.len()];
    for k in g.topological_order() {
        let upstream = g.commodities[k]
            .inputs
            .iter()
            .map(|&j| total[j])
            .fold(0.0_f64, f64::max);
        total[k] = own[k] + upstream;
    }
    total
}

pub fn within_limit(latency: f64, limit: f64) -> bool {
    latency.is_finite() && latency <= limit * (1.0 + LATENCY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_augmented_graph;
    use crate::scenarios::{experiment_b_scenario, small};

    #[test]
    fn max_plus_recursion() {
        let g = build_augmented_graph(&experiment_b_scenario()).unwrap();
        let ix = |id: &str| g.commodity_index(id).unwrap();
        let mut own = vec![0.0; g.commodities.len()];
        own[ix("k6")] = 0.030;
        own[ix("k7")] = 0.050;
        own[ix("k8")] = 0.010;
        let total = latency_recursion(&g, &own);
        assert!((total[ix("k8")] - 0.060).abs() < 1e-15);
        assert_eq!(total[ix("k1")], 0.0);
    }

    /// Both services of the triangle placed directly on `a`, with two
    /// classes of Λ = 10 needing 1 and 2 units on a rate-40 processor.
    fn loaded_triangle() -> (AugmentedGraph, FlowAssignment, Allocation) {
        let mut s = small::triangle();
        s.service_mut("s2").unwrap().arrival_rate = 10.0;
        s.edge_params.processing[1].requirement = 2.0;
        let g = build_augmented_graph(&s).unwrap();
        let mut f = FlowAssignment::zeros(&g);
        for (a, b) in [("k1", "k2"), ("k3", "k4")] {
            for l in ["s(u)->u", "u->a", "a->p(a,ca)"] {
                f.set(g.edge_index(l).unwrap(), g.commodity_index(a).unwrap(), 1.0);
            }
            for l in ["p(a,ca)->a", "a->u", "u->d(u)"] {
                f.set(g.edge_index(l).unwrap(), g.commodity_index(b).unwrap(), 1.0);
            }
        }
        let mut mu = Allocation::zeros(&g);
        for (q, queue) in g.queues.iter().enumerate() {
            mu.rates[q] = if queue.model == QueueModel::SR { 40.0 } else { 60.0 };
        }
        (g, f, mu)
    }

    #[test]
    fn edge_delay_dispatch() {
        let (g, f, mu) = loaded_triangle();
        let eps = SafetyMargins::uniform(&g, 0.25);
        let k1 = g.commodity_index("k1").unwrap();
        let k2 = g.commodity_index("k2").unwrap();
        let d = |label: &str, k: usize, mode| edge_delay(&g, &f, &mu, &eps, g.edge_index(label).unwrap(), k, mode).unwrap();
        assert_eq!(d("s(u)->u", k1, DelayMode::Exact), 0.0);
        assert_eq!(d("a->p(a,ca)", k1, DelayMode::Exact), 0.0);
        // GR link: ν = 60, λ = 10.
        assert!((d("u->a", k1, DelayMode::Exact) - 0.020).abs() < 1e-15);
        // SR processor at ρ = 0.75.
        assert!((d("p(a,ca)->a", k2, DelayMode::Exact) - 0.150).abs() < 1e-12);
        assert!((d("p(a,ca)->a", k2, DelayMode::Bound) - 0.150).abs() < 1e-12);
    }

    #[test]
    fn path_sum_and_report() {
        let (g, f, mu) = loaded_triangle();
        let eps = SafetyMargins::uniform(&g, 0.25);
        let r = end_to_end_latency(&g, &f, &mu, &eps, DelayMode::Exact).unwrap();
        let k1 = r.latency("k1").unwrap();
        assert!((k1.l_s - 0.020).abs() < 1e-15);
        let k2 = r.latency("k2").unwrap();
        // Two link hops of 0.020 plus the processor.
        assert!((k2.l_s - 0.170).abs() < 1e-12);
        assert!((k2.lt_s - 0.190).abs() < 1e-12);
        assert!(k2.feasible);
        assert!(r.unstable.is_empty());
        let mut csv = Vec::new();
        r.write_latency_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("commodity,l_s,lT_s,limit_s,feasible"));
        let mut csv = Vec::new();
        r.write_queue_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("edge,commodity,resource,delay_s,rho"));
    }

    #[test]
    fn instability_is_reported() {
        let (g, f, mut mu) = loaded_triangle();
        let q = g.edges[g.edge_index("p(a,ca)->a").unwrap()].queues[0];
        mu.rates[q] = 30.0;
        let eps = SafetyMargins::uniform(&g, 0.25);
        let r = end_to_end_latency(&g, &f, &mu, &eps, DelayMode::Exact).unwrap();
        assert_eq!(r.unstable, vec![g.queue_label(q)]);
        assert!(!r.feasible());
        assert!(r.latency("k2").unwrap().lt_s.is_infinite());
    }
}
