use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::{validate_scenario, NodeId, QueueModel, Scenario, SystemId};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AugNode {
    Network(NodeId),
    Production(NodeId),
    Consumption(NodeId),
    Computation { node: NodeId, system: SystemId },
}

impl AugNode {
    pub fn label(&self) -> String {
        match self {
            AugNode::Network(u) => u.clone(),
            AugNode::Production(u) => format!("s({u})"),
            AugNode::Consumption(u) => format!("d({u})"),
            AugNode::Computation { node, system } => format!("p({node},{system})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    Comm,
    /// Network node to computation node; carries function inputs.
    CompIn,
    /// Computation node to network node; carries the produced commodity and
    /// holds the processing queues.
    CompOut,
    Source,
    Sink,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeResource {
    /// Index into [`AugmentedGraph::resources`].
    pub resource: usize,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedEdge {
    pub tail: usize,
    pub head: usize,
    pub kind: EdgeKind,
    pub queue_model: QueueModel,
    /// Empty for edges without queues (source, sink, computation inbound).
    pub resources: Vec<EdgeResource>,
    /// (commodity, resource) -> resource units per request.
    pub requirements: BTreeMap<(usize, usize), f64>,
    /// Commodities that may carry flow on this edge.
    pub allowed: Vec<bool>,
    pub queues: Vec<usize>,
    pub label: String,
}

impl AugmentedEdge {
    pub fn requirement(&self, k: usize, r: usize) -> f64 {
        self.requirements.get(&(k, r)).copied().unwrap_or(0.0)
    }

    pub fn has_queues(&self) -> bool {
        !self.resources.is_empty()
    }

    /// True when commodity `k` waits in at least one queue of this edge.
    pub fn delays(&self, k: usize) -> bool {
        self.resources.iter().any(|x| self.requirement(k, x.resource) > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommodityInfo {
    pub id: String,
    pub service: usize,
    pub arrival_rate: f64,
    pub inputs: Vec<usize>,
    /// Commodities that list this one as input.
    pub consumers: Vec<usize>,
    /// Network node index (into `nodes`) of the producer, for source commodities.
    pub source: Option<usize>,
    pub destination: Option<usize>,
    /// Seconds; infinite when unconstrained.
    pub latency_limit: f64,
}

impl CommodityInfo {
    pub fn is_source(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One queue: an SR queue is shared by every commodity on (edge, resource);
/// a GR queue belongs to a single commodity.
#[derive(Clone, Debug, PartialEq)]
pub struct Queue {
    pub edge: usize,
    pub resource: usize,
    /// Index into the edge's `resources`.
    pub slot: usize,
    pub commodity: Option<usize>,
    pub model: QueueModel,
    pub capacity: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct AugmentedGraph {
    pub nodes: Vec<AugNode>,
    pub edges: Vec<AugmentedEdge>,
    pub commodities: Vec<CommodityInfo>,
    pub services: Vec<String>,
    pub resources: Vec<String>,
    pub queues: Vec<Queue>,
    pub out_edges: Vec<Vec<usize>>,
    pub in_edges: Vec<Vec<usize>>,
}

impl AugmentedGraph {
    pub fn node_index(&self, n: &AugNode) -> Option<usize> {
        self.nodes.binary_search(n).ok()
    }

    pub fn commodity_index(&self, id: &str) -> Option<usize> {
        self.commodities.iter().position(|c| c.id == id)
    }

    pub fn edge_index(&self, label: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.label == label)
    }

    pub fn queue_label(&self, q: usize) -> String {
        let queue = &self.queues[q];
        let mut s = format!("{}[{}]", self.edges[queue.edge].label, self.resources[queue.resource]);
        if let Some(k) = queue.commodity {
            s.push('#');
            s.push_str(&self.commodities[k].id);
        }
        s
    }

    /// Commodities of a service, in canonical order.
    pub fn service_commodities(&self, service: usize) -> Vec<usize> {
        (0..self.commodities.len())
            .filter(|&k| self.commodities[k].service == service)
            .collect()
    }

    /// Destination commodities in topological order of each service DAG
    /// (inputs before consumers) for all commodities.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.commodities.len();
        let mut done = vec![false; n];
        let mut order = Vec::with_capacity(n);
        fn visit(g: &AugmentedGraph, k: usize, done: &mut [bool], order: &mut Vec<usize>) {
            if done[k] {
                return;
            }
            done[k] = true;
            for &j in &g.commodities[k].inputs {
                visit(g, j, done, order);
            }
            order.push(k);
        }
        for k in 0..n {
            visit(self, k, &mut done, &mut order);
        }
        order
    }

    /// The computation node of a `CompOut` or `CompIn` edge.
    pub fn comp_node(&self, e: usize) -> Option<usize> {
        let edge = &self.edges[e];
        match edge.kind {
            EdgeKind::CompOut => Some(edge.tail),
            EdgeKind::CompIn => Some(edge.head),
            _ => None,
        }
    }

    /// Largest capacity over all queues, used to normalize rate changes.
    pub fn max_capacity(&self) -> f64 {
        self.queues.iter().map(|q| q.capacity).fold(0.0, f64::max)
    }
}

/// Expands the network into production, consumption and computation nodes.
pub fn build_augmented_graph(s: &Scenario) -> Result<AugmentedGraph> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(Error::InvalidScenario(violations));
    }
    let mut scenario = s.clone();
    scenario.canonicalize();
    let s = &scenario;

    let resources: Vec<String> = s.resources.iter().map(|r| r.id.clone()).collect();
    let resource_ix = |id: &str| resources.iter().position(|r| r == id).expect("validated");

    let mut commodities = Vec::new();
    let mut services = Vec::new();
    for (si, svc) in s.services.iter().enumerate() {
        services.push(svc.id.clone());
        for k in &svc.commodities {
            commodities.push((si, svc.arrival_rate, k));
        }
    }
    let commodity_ix = |id: &str| {
        commodities
            .iter()
            .position(|(_, _, c)| c.id == id)
            .expect("validated")
    };

    let mut nodes = Vec::new();
    for u in &s.nodes {
        nodes.push(AugNode::Network(u.clone()));
        nodes.push(AugNode::Production(u.clone()));
        nodes.push(AugNode::Consumption(u.clone()));
    }
    for sys in &s.compute_systems {
        nodes.push(AugNode::Computation {
            node: sys.node.clone(),
            system: sys.id.clone(),
        });
    }
    nodes.sort();
    let node_ix = |n: &AugNode| nodes.binary_search(n).expect("node exists");

    let infos: Vec<CommodityInfo> = commodities
        .iter()
        .map(|(si, rate, c)| {
            let inputs: Vec<usize> = c.inputs.iter().map(|x| commodity_ix(x)).collect();
            let consumers = commodities
                .iter()
                .enumerate()
                .filter(|(_, (_, _, o))| o.inputs.contains(&c.id))
                .map(|(j, _)| j)
                .collect();
            CommodityInfo {
                id: c.id.clone(),
                service: *si,
                arrival_rate: *rate,
                inputs,
                consumers,
                source: c.source.as_ref().map(|u| node_ix(&AugNode::Network(u.clone()))),
                destination: c
                    .destination
                    .as_ref()
                    .map(|u| node_ix(&AugNode::Network(u.clone()))),
                latency_limit: c.latency_limit.unwrap_or(f64::INFINITY),
            }
        })
        .collect();
    let nk = infos.len();

    let mut edges: Vec<AugmentedEdge> = Vec::new();
    let blank = |tail: usize, head: usize, kind: EdgeKind, model: QueueModel| AugmentedEdge {
        tail,
        head,
        kind,
        queue_model: model,
        resources: Vec::new(),
        requirements: BTreeMap::new(),
        allowed: vec![false; nk],
        queues: Vec::new(),
        label: format!("{}->{}", nodes[tail].label(), nodes[head].label()),
    };

    for p in &s.edge_params.links {
        let tail = node_ix(&AugNode::Network(p.from.clone()));
        let head = node_ix(&AugNode::Network(p.to.clone()));
        let mut e = blank(tail, head, EdgeKind::Comm, p.queue_model);
        let r = resource_ix(&p.resource);
        e.resources.push(EdgeResource {
            resource: r,
            capacity: p.capacity,
            cost: p.cost,
        });
        for (k, info) in infos.iter().enumerate() {
            e.allowed[k] = true;
            let size = s.edge_params.data_sizes.get(&info.id).copied().unwrap_or(0.0);
            if size > 0.0 {
                e.requirements.insert((k, r), size);
            }
        }
        edges.push(e);
    }

    for u in &s.nodes {
        let net = node_ix(&AugNode::Network(u.clone()));
        let mut src = blank(node_ix(&AugNode::Production(u.clone())), net, EdgeKind::Source, QueueModel::GR);
        let mut snk = blank(net, node_ix(&AugNode::Consumption(u.clone())), EdgeKind::Sink, QueueModel::GR);
        for (k, info) in infos.iter().enumerate() {
            src.allowed[k] = info.source == Some(net);
            snk.allowed[k] = info.destination == Some(net);
        }
        edges.push(src);
        edges.push(snk);
    }

    for sys in &s.compute_systems {
        let params = s
            .edge_params
            .compute
            .iter()
            .find(|p| p.system == sys.id)
            .expect("validated");
        let net = node_ix(&AugNode::Network(sys.node.clone()));
        let comp = node_ix(&AugNode::Computation {
            node: sys.node.clone(),
            system: sys.id.clone(),
        });
        let mut out = blank(comp, net, EdgeKind::CompOut, params.queue_model);
        let mut inb = blank(net, comp, EdgeKind::CompIn, params.queue_model);
        for r in &sys.resources {
            out.resources.push(EdgeResource {
                resource: resource_ix(r),
                capacity: params.capacity[r],
                cost: params.cost[r],
            });
        }
        for (k, info) in infos.iter().enumerate() {
            if info.is_source() {
                continue;
            }
            if let Some(f) = &sys.functions {
                if !f.contains(&info.id) {
                    continue;
                }
            }
            // System-specific entries override generic ones.
            let mut reqs: BTreeMap<&str, f64> = BTreeMap::new();
            for p in s.edge_params.processing.iter().filter(|p| p.commodity == info.id) {
                match &p.system {
                    None => {
                        reqs.entry(p.resource.as_str()).or_insert(p.requirement);
                    }
                    Some(x) if *x == sys.id => {
                        reqs.insert(p.resource.as_str(), p.requirement);
                    }
                    _ => {}
                }
            }
            let supported = reqs
                .iter()
                .all(|(r, &v)| v == 0.0 || sys.resources.iter().any(|x| x == r));
            if !supported {
                continue;
            }
            out.allowed[k] = true;
            for (r, v) in reqs {
                if v > 0.0 {
                    out.requirements.insert((k, resource_ix(r)), v);
                }
            }
        }
        for (l, info) in infos.iter().enumerate() {
            inb.allowed[l] = info.consumers.iter().any(|&k| out.allowed[k]);
        }
        edges.push(out);
        edges.push(inb);
    }

    edges.sort_by(|a, b| (&nodes[a.tail], &nodes[a.head]).cmp(&(&nodes[b.tail], &nodes[b.head])));

    let mut queues = Vec::new();
    for (ei, e) in edges.iter_mut().enumerate() {
        for (slot, er) in e.resources.iter().enumerate() {
            let base = Queue {
                edge: ei,
                resource: er.resource,
                slot,
                commodity: None,
                model: e.queue_model,
                capacity: er.capacity,
                cost: er.cost,
            };
            match e.queue_model {
                QueueModel::SR => {
                    e.queues.push(queues.len());
                    queues.push(base);
                }
                QueueModel::GR => {
                    for k in 0..nk {
                        if e.allowed[k] && e.requirement(k, er.resource) > 0.0 {
                            e.queues.push(queues.len());
                            queues.push(Queue {
                                commodity: Some(k),
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
    }

    let mut out_edges = vec![Vec::new(); nodes.len()];
    let mut in_edges = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        out_edges[e.tail].push(i);
        in_edges[e.head].push(i);
    }

    Ok(AugmentedGraph {
        nodes,
        edges,
        commodities: infos,
        services,
        resources,
        queues,
        out_edges,
        in_edges,
    })
}

/// Dense per-(edge, commodity) flow fractions.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowAssignment {
    pub n_edges: usize,
    pub n_commodities: usize,
    pub values: Vec<f64>,
}

impl FlowAssignment {
    pub fn zeros(g: &AugmentedGraph) -> Self {
        FlowAssignment {
            n_edges: g.edges.len(),
            n_commodities: g.commodities.len(),
            values: vec![0.0; g.edges.len() * g.commodities.len()],
        }
    }

    #[inline]
    pub fn get(&self, e: usize, k: usize) -> f64 {
        self.values[e * self.n_commodities + k]
    }

    #[inline]
    pub fn set(&mut self, e: usize, k: usize, v: f64) {
        self.values[e * self.n_commodities + k] = v;
    }

    /// Largest flow over commodities on edge `e`.
    pub fn edge_max(&self, e: usize) -> f64 {
        let row = &self.values[e * self.n_commodities..(e + 1) * self.n_commodities];
        row.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_integral(&self, tol: f64) -> bool {
        self.values
            .iter()
            .all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
    }

    pub fn max_abs_diff(&self, other: &FlowAssignment) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-(edge, commodity) arrival rates `f * Λ` in requests per second.
pub fn arrival_rates(g: &AugmentedGraph, flows: &FlowAssignment) -> Vec<f64> {
    let mut out = flows.values.clone();
    for (i, v) in out.iter_mut().enumerate() {
        *v *= g.commodities[i % flows.n_commodities].arrival_rate;
    }
    out
}

/// Largest violation of the flow constraints: conservation at network nodes,
/// input/output coupling at computation nodes, fixed production and
/// consumption, bounds and edge admissibility.
pub fn flow_violation(g: &AugmentedGraph, f: &FlowAssignment) -> f64 {
    let mut worst: f64 = 0.0;
    let nk = g.commodities.len();
    for (e, edge) in g.edges.iter().enumerate() {
        for k in 0..nk {
            let v = f.get(e, k);
            worst = worst.max(-v).max(v - 1.0);
            if !edge.allowed[k] {
                worst = worst.max(v.abs());
            }
        }
    }
    for (n, node) in g.nodes.iter().enumerate() {
        match node {
            AugNode::Network(_) => {
                for k in 0..nk {
                    let inflow: f64 = g.in_edges[n].iter().map(|&e| f.get(e, k)).sum();
                    let outflow: f64 = g.out_edges[n].iter().map(|&e| f.get(e, k)).sum();
                    worst = worst.max((inflow - outflow).abs());
                }
            }
            AugNode::Consumption(_) => {
                for &e in &g.in_edges[n] {
                    let u = g.edges[e].tail;
                    for (k, c) in g.commodities.iter().enumerate() {
                        let want = if c.destination == Some(u) { 1.0 } else { 0.0 };
                        worst = worst.max((f.get(e, k) - want).abs());
                    }
                }
            }
            AugNode::Computation { .. } => {
                let out = g.out_edges[n][0];
                let inb = g.in_edges[n][0];
                for (k, c) in g.commodities.iter().enumerate() {
                    for &l in &c.inputs {
                        worst = worst.max((f.get(out, k) - f.get(inb, l)).abs());
                    }
                }
            }
            AugNode::Production(_) => {}
        }
    }
    worst
}
