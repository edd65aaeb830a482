//! Built-in experiment scenarios.
//!
//! Experiment A: a user node reaches a cheap cloud node `n` and a ten times
//! more expensive edge node `e` through two routers; two single-function
//! services, the second needing twice the processing of the first.
//!
//! Experiment B: a media pipeline from a source user `w` to a destination
//! user `v` through access, edge, core and cloud nodes. Feature extraction
//! and rendering are GR, the AI stages SR; every node runs each stage on its
//! own system. `v` can render for free with 5% of the capacity of the other
//! systems.

use std::collections::BTreeMap;

use crate::model::{
    Commodity, ComputeParams, ComputeSystem, EdgeParams, Link, LinkParams, ProcessingRequirement,
    QueueModel, Resource, Scenario, ServiceGraph, SCHEMA_VERSION,
};

pub(super) fn resource(id: &str) -> Resource {
    Resource {
        id: id.into(),
        name: String::new(),
    }
}

pub(super) fn commodity(id: &str, inputs: &[&str]) -> Commodity {
    Commodity {
        id: id.into(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        source: None,
        destination: None,
        latency_limit: None,
    }
}

pub(super) fn sourced(id: &str, node: &str) -> Commodity {
    Commodity {
        source: Some(node.into()),
        ..commodity(id, &[])
    }
}

pub(super) fn delivered(mut c: Commodity, node: &str, limit: f64) -> Commodity {
    c.destination = Some(node.into());
    c.latency_limit = Some(limit);
    c
}

/// Both directions of every pair, with identical GR link parameters.
pub(super) fn duplex(pairs: &[(&str, &str)], capacity: f64, cost: f64) -> (Vec<Link>, Vec<LinkParams>) {
    let mut links = Vec::new();
    let mut params = Vec::new();
    for &(a, b) in pairs {
        for (from, to) in [(a, b), (b, a)] {
            links.push(Link {
                from: from.into(),
                to: to.into(),
            });
            params.push(LinkParams {
                from: from.into(),
                to: to.into(),
                queue_model: QueueModel::GR,
                resource: "bw".into(),
                capacity,
                cost,
            });
        }
    }
    (links, params)
}

pub(super) fn system(id: &str, node: &str, res: &str, functions: Option<&[&str]>) -> ComputeSystem {
    ComputeSystem {
        id: id.into(),
        node: node.into(),
        resources: vec![res.into()],
        functions: functions.map(|f| f.iter().map(|s| s.to_string()).collect()),
    }
}

pub(super) fn compute(system: &str, model: QueueModel, res: &str, capacity: f64, cost: f64) -> ComputeParams {
    ComputeParams {
        system: system.into(),
        queue_model: model,
        capacity: BTreeMap::from([(res.to_string(), capacity)]),
        cost: BTreeMap::from([(res.to_string(), cost)]),
    }
}

pub(super) fn requirement(commodity: &str, resource: &str, requirement: f64) -> ProcessingRequirement {
    ProcessingRequirement {
        commodity: commodity.into(),
        resource: resource.into(),
        requirement,
        system: None,
    }
}

/// Cloud CPU cost per unit of rate; the edge node costs ten times more.
pub const EXPERIMENT_A_CLOUD_COST: f64 = 1.0;
/// Processing per request of the first service; the second needs twice this.
pub const EXPERIMENT_A_Q: f64 = 1.0;

pub fn experiment_a_scenario() -> Scenario {
    let c = EXPERIMENT_A_CLOUD_COST;
    let q = EXPERIMENT_A_Q;
    let (links, link_params) = duplex(
        &[("u", "r1"), ("r1", "e"), ("r1", "r2"), ("r2", "n")],
        20000.0,
        0.01 * c,
    );
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "experiment-a".into(),
        resources: vec![resource("bw"), resource("cpu")],
        nodes: ["u", "r1", "r2", "e", "n"].map(String::from).to_vec(),
        links,
        compute_systems: vec![
            system("edge", "e", "cpu", None),
            system("cloud", "n", "cpu", None),
        ],
        services: vec![
            ServiceGraph {
                id: "phi1".into(),
                arrival_rate: 250.0,
                commodities: vec![sourced("k1", "u"), delivered(commodity("k2", &["k1"]), "u", 0.1)],
            },
            ServiceGraph {
                id: "phi2".into(),
                arrival_rate: 300.0,
                commodities: vec![sourced("k3", "u"), delivered(commodity("k4", &["k3"]), "u", 0.1)],
            },
        ],
        edge_params: EdgeParams {
            links: link_params,
            compute: vec![
                compute("edge", QueueModel::SR, "cpu", 15000.0, 10.0 * c),
                compute("cloud", QueueModel::SR, "cpu", 3600.0, c),
            ],
            data_sizes: BTreeMap::from([
                ("k1".into(), 1.0),
                ("k2".into(), 0.2),
                ("k3".into(), 1.0),
                ("k4".into(), 0.5),
            ]),
            processing: vec![requirement("k2", "cpu", q), requirement("k4", "cpu", 2.0 * q)],
        },
    }
}

/// CPU capacity of the edge and cloud systems in experiment B.
pub const EXPERIMENT_B_CPU: f64 = 30000.0;
/// Share of that capacity available at the destination user.
pub const EXPERIMENT_B_USER_SHARE: f64 = 0.05;

pub fn experiment_b_scenario() -> Scenario {
    let (links, link_params) = duplex(
        &[
            ("w", "a1"),
            ("a1", "e1"),
            ("e1", "c"),
            ("c", "cl"),
            ("c", "e2"),
            ("e2", "a2"),
            ("a2", "v"),
        ],
        200000.0,
        0.01,
    );
    let cpu = EXPERIMENT_B_CPU;
    let mut compute_systems = Vec::new();
    let mut compute_params = Vec::new();
    for (node, cpu_cost, gpu_cost) in [("e1", 2.0, 4.0), ("cl", 1.0, 2.0), ("e2", 2.0, 4.0)] {
        let (c, gp, r) = (format!("cpu_{node}"), format!("gpu_{node}"), format!("render_{node}"));
        compute_systems.push(system(&c, node, "cpu", Some(&["k4", "k5"])));
        compute_systems.push(system(&gp, node, "gpu", Some(&["k6", "k7"])));
        compute_systems.push(system(&r, node, "cpu", Some(&["k8"])));
        compute_params.push(compute(&c, QueueModel::GR, "cpu", cpu, cpu_cost));
        compute_params.push(compute(&gp, QueueModel::SR, "gpu", cpu, gpu_cost));
        compute_params.push(compute(&r, QueueModel::GR, "cpu", cpu, cpu_cost));
    }
    compute_systems.push(system("render_v", "v", "cpu", Some(&["k8"])));
    compute_params.push(compute(
        "render_v",
        QueueModel::GR,
        "cpu",
        EXPERIMENT_B_USER_SHARE * cpu,
        0.0,
    ));

    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "experiment-b".into(),
        resources: vec![resource("bw"), resource("cpu"), resource("gpu")],
        nodes: ["w", "a1", "e1", "c", "cl", "e2", "a2", "v"].map(String::from).to_vec(),
        links,
        compute_systems,
        services: vec![ServiceGraph {
            id: "ar".into(),
            arrival_rate: 1000.0,
            commodities: vec![
                sourced("k1", "w"),
                sourced("k2", "w"),
                sourced("k3", "w"),
                commodity("k4", &["k1"]),
                commodity("k5", &["k2"]),
                commodity("k6", &["k4"]),
                commodity("k7", &["k5", "k3"]),
                delivered(commodity("k8", &["k6", "k7"]), "v", 0.14),
            ],
        }],
        edge_params: EdgeParams {
            links: link_params,
            compute: compute_params,
            data_sizes: BTreeMap::from([
                ("k1".into(), 1.0),
                ("k2".into(), 8.0),
                ("k3".into(), 0.5),
                ("k4".into(), 0.5),
                ("k5".into(), 2.0),
                ("k6".into(), 0.5),
                ("k7".into(), 2.0),
                ("k8".into(), 4.0),
            ]),
            processing: vec![
                requirement("k4", "cpu", 2.0),
                requirement("k5", "cpu", 4.0),
                requirement("k6", "gpu", 2.0),
                requirement("k7", "gpu", 4.0),
                // Loads the user's device to about 99%.
                requirement("k8", "cpu", 1.4835),
            ],
        },
    }
}
