use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{build_augmented_graph, CommodityId, Scenario, ServiceId};
use crate::optimizer::{baseline_graph, private_tag, solve_graph, Solution, SolveOptions};
use crate::{Error, Result};

/// Scenario parameter varied by a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "target")]
pub enum SweepParam {
    ArrivalRate(ServiceId),
    LatencyLimit(CommodityId),
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepParam::ArrivalRate(s) => write!(f, "services.{s}.arrival_rate"),
            SweepParam::LatencyLimit(k) => write!(f, "commodities.{k}.latency_limit"),
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    /// `services.<id>.arrival_rate` or `commodities.<id>.latency_limit`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        match parts.as_slice() {
            ["services", id, "arrival_rate"] => Ok(SweepParam::ArrivalRate(id.to_string())),
            ["commodities", id, "latency_limit"] => Ok(SweepParam::LatencyLimit(id.to_string())),
            _ => Err(Error::Domain(format!(
                "unknown sweep parameter '{s}'; expected services.<id>.arrival_rate or commodities.<id>.latency_limit"
            ))),
        }
    }
}

impl SweepParam {
    pub fn apply(&self, s: &mut Scenario, value: f64) -> Result<()> {
        match self {
            SweepParam::ArrivalRate(id) => {
                let svc = s
                    .service_mut(id)
                    .ok_or_else(|| Error::Structural(format!("unknown service {id}")))?;
                svc.arrival_rate = value;
            }
            SweepParam::LatencyLimit(id) => {
                let c = s
                    .commodity_mut(id)
                    .ok_or_else(|| Error::Structural(format!("unknown commodity {id}")))?;
                c.latency_limit = Some(value);
            }
        }
        Ok(())
    }

    /// Commodity whose latency the sweep reports on: the target of a
    /// latency sweep, or the first destination of the swept service.
    pub fn tracked(&self, s: &Scenario) -> Option<CommodityId> {
        match self {
            SweepParam::LatencyLimit(k) => Some(k.clone()),
            SweepParam::ArrivalRate(id) => s
                .services
                .iter()
                .find(|x| &x.id == id)?
                .commodities
                .iter()
                .find(|c| c.destination.is_some())
                .map(|c| c.id.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    /// Over-provisioning factors of the baseline runs.
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub options: SolveOptions,
    /// Concurrent points; zero uses all cores.
    #[serde(default)]
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(parameter: SweepParam, values: Vec<f64>, alphas: Vec<f64>) -> Self {
        SweepSpec {
            parameter,
            values,
            alphas,
            options: SolveOptions::default(),
            workers: 0,
        }
    }

    /// `a:b:step`, inclusive of `b` up to rounding.
    pub fn parse_range(text: &str) -> Result<Vec<f64>> {
        let bad = || Error::Domain(format!("range '{text}' is not a:b:step"));
        let parts: Vec<f64> = text
            .split(':')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let [a, b, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0 && b >= a && a.is_finite() && b.is_finite()) {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| a + i as f64 * step).collect())
    }

    fn check(&self, s: &Scenario) -> Result<()> {
        let inc = self.values.windows(2).all(|w| w[0] < w[1]);
        let dec = self.values.windows(2).all(|w| w[0] > w[1]);
        if self.values.is_empty() || !(inc || dec) {
            return Err(Error::Domain("sweep values must be non-empty and strictly monotone".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a >= 1.0)) {
            return Err(Error::Domain(format!("alpha {a} must be at least 1")));
        }
        let mut probe = s.clone();
        self.parameter.apply(&mut probe, self.values[0])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: String,
    pub cost: f64,
    /// Exact `lT` per destination commodity.
    pub latency: BTreeMap<CommodityId, f64>,
    /// Latency limit per destination commodity at this point.
    pub limit: BTreeMap<CommodityId, f64>,
    pub feasible: bool,
    /// Compute nodes carrying flow.
    pub active_compute: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub tracked: Option<CommodityId>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// `value,method,cost,feasible,lT_<k>...,active_compute,error`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let dests: Vec<String> = self
            .rows
            .first()
            .map(|r| r.latency.keys().cloned().collect())
            .unwrap_or_default();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["value".to_string(), "method".into(), "cost".into(), "feasible".into()];
        header.extend(dests.iter().map(|k| format!("lT_{k}_s")));
        header.extend(["active_compute".to_string(), "error".into()]);
        out.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.value.to_string(),
                r.method.clone(),
                r.cost.to_string(),
                r.feasible.to_string(),
            ];
            rec.extend(dests.iter().map(|k| r.latency.get(k).map_or(String::new(), f64::to_string)));
            rec.push(r.active_compute.join(";"));
            rec.push(r.error.clone().unwrap_or_default());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn row_from(value: f64, g: &crate::model::AugmentedGraph, s: &Solution) -> SweepRow {
    let mut latency = BTreeMap::new();
    let mut limit = BTreeMap::new();
    for (k, c) in g.commodities.iter().enumerate() {
        if c.destination.is_some() {
            latency.insert(c.id.clone(), s.delays.commodities[k].lt_s);
            limit.insert(c.id.clone(), c.latency_limit);
        }
    }
    SweepRow {
        value,
        method: s.method.clone(),
        cost: s.cost,
        latency,
        limit,
        feasible: s.feasible,
        active_compute: s.active_compute(g),
        error: None,
    }
}

fn failed_row(value: f64, method: String, err: &Error) -> SweepRow {
    SweepRow {
        value,
        method,
        cost: f64::NAN,
        latency: BTreeMap::new(),
        limit: BTreeMap::new(),
        feasible: false,
        active_compute: Vec::new(),
        error: Some(err.to_string()),
    }
}

fn run_point(s: &Scenario, spec: &SweepSpec, value: f64) -> Vec<SweepRow> {
    let mut methods = vec!["sparq".to_string()];
    methods.extend(spec.alphas.iter().map(|&a| private_tag(a)));
    let mut point = s.clone();
    let g = spec
        .parameter
        .apply(&mut point, value)
        .and_then(|_| build_augmented_graph(&point));
    let g = match g {
        Ok(g) => g,
        Err(e) => return methods.into_iter().map(|m| failed_row(value, m, &e)).collect(),
    };
    let mut rows = Vec::with_capacity(methods.len());
    match solve_graph(&g, &spec.options) {
        Ok(sol) => rows.push(row_from(value, &g, &sol)),
        Err(e) => rows.push(failed_row(value, methods[0].clone(), &e)),
    }
    for (&alpha, m) in spec.alphas.iter().zip(&methods[1..]) {
        match baseline_graph(&g, alpha, &spec.options) {
            Ok(sol) => rows.push(row_from(value, &g, &sol)),
            Err(e) => rows.push(failed_row(value, m.clone(), &e)),
        }
    }
    rows
}

/// Runs SPARQ and every baseline at each point. Points run concurrently;
/// rows are ordered by point, then method. Failures are kept as rows.
pub fn run_sweep(s: &Scenario, spec: &SweepSpec) -> Result<SweepResult> {
    spec.check(s)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    let per_point: Vec<Vec<SweepRow>> = pool.install(|| {
        spec.values
            .par_iter()
            .map(|&v| run_point(s, spec, v))
            .collect()
    });
    Ok(SweepResult {
        parameter: spec.parameter.clone(),
        tracked: spec.parameter.tracked(s),
        rows: per_point.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub method: String,
    pub commodity: String,
    pub latency_s: Option<f64>,
    pub cost: Option<f64>,
    pub limit_s: Option<f64>,
    pub feasible: bool,
    pub note: String,
}

/// Cost-latency pairs of the tracked commodity, per method sorted by
/// latency. Methods without a single feasible point get one note row.
pub fn tradeoff_rows(results: &SweepResult) -> Result<Vec<TradeoffRow>> {
    if results.rows.is_empty() {
        return Err(Error::Domain("no sweep rows to summarize".into()));
    }
    let k = results
        .tracked
        .clone()
        .ok_or_else(|| Error::Domain("sweep tracks no destination commodity".into()))?;
    let mut out = Vec::new();
    for method in results.methods() {
        if !results.rows_for(&method).any(|r| r.feasible) {
            out.push(TradeoffRow {
                method,
                commodity: k.clone(),
                latency_s: None,
                cost: None,
                limit_s: None,
                feasible: false,
                note: "no feasible point".into(),
            });
            continue;
        }
        let mut pts: Vec<TradeoffRow> = results
            .rows_for(&method)
            .filter_map(|r| {
                let l = *r.latency.get(&k)?;
                (l.is_finite() && r.cost.is_finite()).then(|| TradeoffRow {
                    method: method.clone(),
                    commodity: k.clone(),
                    latency_s: Some(l),
                    cost: Some(r.cost),
                    limit_s: r.limit.get(&k).copied().filter(|x| x.is_finite()),
                    feasible: r.feasible,
                    note: String::new(),
                })
            })
            .collect();
        pts.sort_by(|a, b| {
            a.latency_s
                .partial_cmp(&b.latency_s)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cost.partial_cmp(&b.cost).unwrap_or(std::cmp::Ordering::Equal))
        });
        out.extend(pts);
    }
    Ok(out)
}

/// `method,commodity,latency_s,cost,limit_s,feasible,note`
pub fn emit_tradeoff<W: Write>(results: &SweepResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in tradeoff_rows(results)? {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QueueModel;
    use crate::scenarios::{experiment_a_scenario, small};

    #[test]
    fn parameter_paths() {
        for text in ["services.phi2.arrival_rate", "commodities.k8.latency_limit"] {
            let p: SweepParam = text.parse().unwrap();
            assert_eq!(p.to_string(), text);
        }
        assert!("services.phi2.rate".parse::<SweepParam>().is_err());
        assert!("phi2".parse::<SweepParam>().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(SweepSpec::parse_range("1:3:1").unwrap(), vec![1.0, 2.0, 3.0]);
        let v = SweepSpec::parse_range("0.08:0.2:0.01").unwrap();
        assert_eq!(v.len(), 13);
        assert!((v[12] - 0.2).abs() < 1e-12);
        for bad in ["1:2", "3:1:1", "1:2:0", "a:b:c", "1:2:-1"] {
            assert!(SweepSpec::parse_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn spec_checks() {
        let s = experiment_a_scenario();
        let p = SweepParam::ArrivalRate("phi2".into());
        assert!(run_sweep(&s, &SweepSpec::new(p.clone(), vec![1.0, 1.0], vec![])).is_err());
        assert!(run_sweep(&s, &SweepSpec::new(p, vec![1.0], vec![0.5])).is_err());
        let missing = SweepParam::ArrivalRate("nope".into());
        assert!(run_sweep(&s, &SweepSpec::new(missing, vec![1.0], vec![])).is_err());
    }

    #[test]
    fn tracked_commodity() {
        let s = experiment_a_scenario();
        assert_eq!(SweepParam::ArrivalRate("phi2".into()).tracked(&s).as_deref(), Some("k4"));
        assert_eq!(SweepParam::LatencyLimit("k2".into()).tracked(&s).as_deref(), Some("k2"));
    }

    #[test]
    fn small_sweep_rows_and_csv() {
        let s = small::single_link(QueueModel::SR, 1000.0, 1.0, 10.0, 1.0, 0.1);
        let spec = SweepSpec::new(
            SweepParam::ArrivalRate("s".into()),
            vec![10.0, 20.0, 30.0],
            vec![1.0, 2.0],
        );
        let r = run_sweep(&s, &spec).unwrap();
        assert_eq!(r.rows.len(), 9);
        assert_eq!(r.methods(), ["sparq", "private_1.0", "private_2.0"]);
        let values: Vec<f64> = r.rows_for("sparq").map(|x| x.value).collect();
        assert_eq!(values, [10.0, 20.0, 30.0]);
        // μ = λ + 1/L on a single M/M/1 hop.
        for row in r.rows_for("sparq") {
            assert!(row.feasible);
            assert!((row.cost - (row.value + 10.0)).abs() < 1e-3, "{row:?}");
        }
        assert!(r.rows_for("private_1.0").all(|x| !x.feasible));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("value,method,cost,feasible,lT_k_s,active_compute,error"));
        assert_eq!(text.lines().count(), 10);
        let rows = tradeoff_rows(&r).unwrap();
        assert!(rows.iter().any(|x| x.method == "private_1.0" && x.note == "no feasible point"));
    }
}
