use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub type NodeId = String;
pub type ResourceId = String;
pub type SystemId = String;
pub type ServiceId = String;
pub type CommodityId = String;

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueueModel {
    /// One M/M/1 queue per commodity and resource.
    GR,
    /// One M/G/1 queue per resource, shared by all commodities.
    SR,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Resource {
    pub id: ResourceId,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ComputeSystem {
    pub id: SystemId,
    pub node: NodeId,
    pub resources: Vec<ResourceId>,
    /// Commodities this system may produce. `None` means any commodity whose
    /// requirements it can satisfy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<CommodityId>>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Commodity {
    pub id: CommodityId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<CommodityId>,
    /// Production node; required exactly for commodities without inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<NodeId>,
    /// Consumption node of a destination commodity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<NodeId>,
    /// End-to-end latency limit in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_limit: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ServiceGraph {
    pub id: ServiceId,
    /// Requests per second.
    pub arrival_rate: f64,
    pub commodities: Vec<Commodity>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LinkParams {
    pub from: NodeId,
    pub to: NodeId,
    pub queue_model: QueueModel,
    pub resource: ResourceId,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ComputeParams {
    pub system: SystemId,
    pub queue_model: QueueModel,
    pub capacity: BTreeMap<ResourceId, f64>,
    pub cost: BTreeMap<ResourceId, f64>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ProcessingRequirement {
    pub commodity: CommodityId,
    pub resource: ResourceId,
    pub requirement: f64,
    /// Restricts the entry to one system; system-specific entries override
    /// generic ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemId>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq, Default)]
pub struct EdgeParams {
    pub links: Vec<LinkParams>,
    pub compute: Vec<ComputeParams>,
    /// Link resource units needed to carry one request of a commodity.
    #[serde(default)]
    pub data_sizes: BTreeMap<CommodityId, f64>,
    #[serde(default)]
    pub processing: Vec<ProcessingRequirement>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub resources: Vec<Resource>,
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub compute_systems: Vec<ComputeSystem>,
    pub services: Vec<ServiceGraph>,
    pub edge_params: EdgeParams,
}

/// Network topology view of a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    pub nodes: Vec<NodeId>,
    pub links: Vec<Link>,
    pub hosted_systems: BTreeMap<NodeId, Vec<SystemId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl Scenario {
    /// Sorts every list into canonical (lexicographic id) order.
    pub fn canonicalize(&mut self) {
        self.resources.sort_by(|a, b| a.id.cmp(&b.id));
        self.nodes.sort();
        self.links.sort();
        self.compute_systems.sort_by(|a, b| a.id.cmp(&b.id));
        for s in &mut self.compute_systems {
            s.resources.sort();
        }
        self.services.sort_by(|a, b| a.id.cmp(&b.id));
        for s in &mut self.services {
            s.commodities.sort_by(|a, b| a.id.cmp(&b.id));
        }
        let p = &mut self.edge_params;
        p.links.sort_by(|a, b| (&a.from, &a.to).cmp(&(&b.from, &b.to)));
        p.compute.sort_by(|a, b| a.system.cmp(&b.system));
        p.processing.sort_by(|a, b| {
            (&a.commodity, &a.resource, &a.system).cmp(&(&b.commodity, &b.resource, &b.system))
        });
    }

    pub fn network(&self) -> NetworkGraph {
        let mut hosted: BTreeMap<NodeId, Vec<SystemId>> = BTreeMap::new();
        for s in &self.compute_systems {
            hosted.entry(s.node.clone()).or_default().push(s.id.clone());
        }
        for v in hosted.values_mut() {
            v.sort();
        }
        let mut nodes = self.nodes.clone();
        nodes.sort();
        let mut links = self.links.clone();
        links.sort();
        NetworkGraph {
            nodes,
            links,
            hosted_systems: hosted,
        }
    }

    pub fn service_mut(&mut self, id: &str) -> Option<&mut ServiceGraph> {
        self.services.iter_mut().find(|s| s.id == id)
    }

    pub fn commodity_mut(&mut self, id: &str) -> Option<&mut Commodity> {
        self.services
            .iter_mut()
            .flat_map(|s| s.commodities.iter_mut())
            .find(|c| c.id == id)
    }

    pub fn from_json(text: &str) -> crate::Result<Scenario> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(crate::Error::SchemaVersion {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.out.push(Violation {
            location: location.into(),
            message: message.into(),
        });
    }

    fn unique<'a>(&mut self, what: &str, ids: impl Iterator<Item = &'a String>) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        for id in ids {
            if !seen.insert(id.clone()) {
                self.push(format!("{what} {id}"), "duplicate id");
            }
        }
        seen
    }

    fn non_negative(&mut self, location: &str, what: &str, x: f64) {
        if !(x.is_finite() && x >= 0.0) {
            self.push(location, format!("{what} must be finite and non-negative, got {x}"));
        }
    }

    fn positive(&mut self, location: &str, what: &str, x: f64) {
        if !(x.is_finite() && x > 0.0) {
            self.push(location, format!("{what} must be finite and positive, got {x}"));
        }
    }
}

/// Checks structural and numerical well-formedness. An empty list means the
/// scenario can be optimized.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };
    if s.schema_version != SCHEMA_VERSION {
        c.push(
            "schema_version",
            format!("expected {SCHEMA_VERSION}, got {}", s.schema_version),
        );
    }
    let resources = c.unique("resource", s.resources.iter().map(|r| &r.id));
    let nodes = c.unique("node", s.nodes.iter());
    let systems = c.unique("compute system", s.compute_systems.iter().map(|x| &x.id));
    c.unique("service", s.services.iter().map(|x| &x.id));
    let commodities = c.unique(
        "commodity",
        s.services.iter().flat_map(|x| x.commodities.iter().map(|k| &k.id)),
    );

    let mut link_set = BTreeSet::new();
    for l in &s.links {
        let loc = format!("link {}->{}", l.from, l.to);
        for end in [&l.from, &l.to] {
            if !nodes.contains(end) {
                c.push(&loc, format!("unknown node {end}"));
            }
        }
        if l.from == l.to {
            c.push(&loc, "self-loop");
        }
        if !link_set.insert((l.from.clone(), l.to.clone())) {
            c.push(&loc, "duplicate link");
        }
    }
    let mut param_set = BTreeSet::new();
    for p in &s.edge_params.links {
        let loc = format!("edge_params.links {}->{}", p.from, p.to);
        if !link_set.contains(&(p.from.clone(), p.to.clone())) {
            c.push(&loc, "parameters for a link that does not exist");
        }
        if !param_set.insert((p.from.clone(), p.to.clone())) {
            c.push(&loc, "duplicate link parameters");
        }
        if !resources.contains(&p.resource) {
            c.push(&loc, format!("unknown resource {}", p.resource));
        }
        c.positive(&loc, "capacity", p.capacity);
        c.non_negative(&loc, "cost", p.cost);
    }
    for l in &link_set {
        if !param_set.contains(l) {
            c.push(format!("link {}->{}", l.0, l.1), "missing edge parameters");
        }
    }

    let mut compute_set = BTreeSet::new();
    for sys in &s.compute_systems {
        let loc = format!("compute system {}", sys.id);
        if !nodes.contains(&sys.node) {
            c.push(&loc, format!("unknown host node {}", sys.node));
        }
        if sys.resources.is_empty() {
            c.push(&loc, "provides no resources");
        }
        for r in &sys.resources {
            if !resources.contains(r) {
                c.push(&loc, format!("unknown resource {r}"));
            }
        }
        for k in sys.functions.iter().flatten() {
            if !commodities.contains(k) {
                c.push(&loc, format!("unknown function commodity {k}"));
            }
        }
    }
    for p in &s.edge_params.compute {
        let loc = format!("edge_params.compute {}", p.system);
        if !compute_set.insert(p.system.clone()) {
            c.push(&loc, "duplicate compute parameters");
        }
        let Some(sys) = s.compute_systems.iter().find(|x| x.id == p.system) else {
            c.push(&loc, "unknown compute system");
            continue;
        };
        for r in &sys.resources {
            match p.capacity.get(r) {
                Some(&m) => c.positive(&loc, &format!("capacity of {r}"), m),
                None => c.push(&loc, format!("missing capacity for {r}")),
            }
            match p.cost.get(r) {
                Some(&x) => c.non_negative(&loc, &format!("cost of {r}"), x),
                None => c.push(&loc, format!("missing cost for {r}")),
            }
        }
        for r in p.capacity.keys().chain(p.cost.keys()) {
            if !sys.resources.contains(r) {
                c.push(&loc, format!("resource {r} is not provided by the system"));
            }
        }
    }
    for id in &systems {
        if !compute_set.contains(id) {
            c.push(format!("compute system {id}"), "missing edge parameters");
        }
    }

    for svc in &s.services {
        let loc = format!("service {}", svc.id);
        c.positive(&loc, "arrival rate", svc.arrival_rate);
        let local: BTreeSet<&String> = svc.commodities.iter().map(|k| &k.id).collect();
        let mut has_destination = false;
        for k in &svc.commodities {
            let kloc = format!("commodity {}", k.id);
            for i in &k.inputs {
                if !local.contains(i) {
                    c.push(&kloc, format!("input {i} is not a commodity of service {}", svc.id));
                }
                if i == &k.id {
                    c.push(&kloc, "commodity lists itself as input");
                }
            }
            match (&k.source, k.inputs.is_empty()) {
                (None, true) => c.push(&kloc, "commodity without inputs needs a source node"),
                (Some(_), false) => c.push(&kloc, "commodity with inputs cannot have a source node"),
                (Some(n), true) if !nodes.contains(n) => {
                    c.push(&kloc, format!("unknown source node {n}"))
                }
                _ => {}
            }
            if let Some(d) = &k.destination {
                has_destination = true;
                if !nodes.contains(d) {
                    c.push(&kloc, format!("unknown destination node {d}"));
                }
            }
            match k.latency_limit {
                Some(_) if k.destination.is_none() => {
                    c.push(&kloc, "latency limit on a non-destination commodity")
                }
                Some(l) if !(l > 0.0) => c.push(&kloc, format!("non-positive latency limit {l}")),
                None if k.destination.is_some() => {
                    c.push(&kloc, "destination commodity without latency limit")
                }
                _ => {}
            }
        }
        if !has_destination {
            c.push(&loc, "service has no destination commodity");
        }
        if has_cycle(svc) {
            c.push(&loc, "cycle in service DAG");
        }
    }

    for (k, &d) in &s.edge_params.data_sizes {
        let loc = format!("edge_params.data_sizes {k}");
        if !commodities.contains(k) {
            c.push(&loc, "unknown commodity");
        }
        c.non_negative(&loc, "data size", d);
    }
    for p in &s.edge_params.processing {
        let loc = format!("edge_params.processing {}/{}", p.commodity, p.resource);
        if !commodities.contains(&p.commodity) {
            c.push(&loc, "unknown commodity");
        }
        if !resources.contains(&p.resource) {
            c.push(&loc, "unknown resource");
        }
        if let Some(sys) = &p.system {
            if !systems.contains(sys) {
                c.push(&loc, format!("unknown compute system {sys}"));
            }
        }
        c.non_negative(&loc, "requirement", p.requirement);
    }
    c.out
}

fn has_cycle(svc: &ServiceGraph) -> bool {
    // Kahn's algorithm over the input relation.
    let ids: Vec<&String> = svc.commodities.iter().map(|k| &k.id).collect();
    let index = |id: &String| ids.iter().position(|x| *x == id);
    let n = ids.len();
    let mut indeg = vec![0usize; n];
    let mut succ = vec![Vec::new(); n];
    for (j, k) in svc.commodities.iter().enumerate() {
        for i in &k.inputs {
            if let Some(a) = index(i) {
                succ[a].push(j);
                indeg[j] += 1;
            }
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut seen = 0;
    while let Some(a) = stack.pop() {
        seen += 1;
        for &b in &succ[a] {
            indeg[b] -= 1;
            if indeg[b] == 0 {
                stack.push(b);
            }
        }
    }
    seen != n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{experiment_a_scenario, experiment_b_scenario};

    fn messages(s: &Scenario) -> Vec<String> {
        validate_scenario(s).iter().map(|v| v.to_string()).collect()
    }

    #[test]
    fn experiments_are_valid() {
        assert!(validate_scenario(&experiment_a_scenario()).is_empty());
        assert!(validate_scenario(&experiment_b_scenario()).is_empty());
    }

    #[test]
    fn self_input_is_a_cycle() {
        let mut s = experiment_a_scenario();
        s.commodity_mut("k2").unwrap().inputs.push("k2".into());
        let m = messages(&s);
        assert!(m.iter().any(|x| x.contains("cycle in service DAG")), "{m:?}");
    }

    #[test]
    fn longer_cycle() {
        let mut s = experiment_b_scenario();
        s.commodity_mut("k4").unwrap().inputs.push("k8".into());
        assert!(messages(&s).iter().any(|x| x.contains("cycle in service DAG")));
    }

    #[test]
    fn latency_limits() {
        let mut s = experiment_a_scenario();
        s.commodity_mut("k4").unwrap().latency_limit = Some(0.0);
        assert!(messages(&s).iter().any(|x| x.contains("non-positive latency limit")));
        s.commodity_mut("k4").unwrap().latency_limit = None;
        assert!(messages(&s).iter().any(|x| x.contains("without latency limit")));
    }

    #[test]
    fn dangling_references() {
        let mut s = experiment_a_scenario();
        s.links.push(Link {
            from: "u".into(),
            to: "mars".into(),
        });
        s.compute_systems[0].node = "nowhere".into();
        s.services[0].arrival_rate = 0.0;
        let m = messages(&s);
        assert!(m.iter().any(|x| x.contains("unknown node mars")));
        assert!(m.iter().any(|x| x.contains("unknown host node nowhere")));
        assert!(m.iter().any(|x| x.contains("arrival rate")));
        assert!(m.iter().any(|x| x.contains("missing edge parameters")));
    }

    #[test]
    fn json_round_trip() {
        for s in [experiment_a_scenario(), experiment_b_scenario()] {
            let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn schema_version_is_required() {
        let mut v: serde_json::Value = serde_json::from_str(&experiment_a_scenario().to_json().unwrap()).unwrap();
        v["schema_version"] = 7.into();
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(crate::Error::SchemaVersion { found: 7, .. })
        ));
        v.as_object_mut().unwrap().remove("schema_version");
        assert!(matches!(
            Scenario::from_json(&v.to_string()),
            Err(crate::Error::SchemaVersion { found: 0, .. })
        ));
    }

    #[test]
    fn network_view() {
        let n = experiment_a_scenario().network();
        assert_eq!(n.nodes.len(), 5);
        assert_eq!(n.hosted_systems["e"], vec!["edge".to_string()]);
    }
}
