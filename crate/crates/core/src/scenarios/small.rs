//! Small instances with known answers, used by tests and benchmarks.

use std::collections::BTreeMap;

use super::experiments::{commodity, compute, delivered, duplex, requirement, resource, sourced, system};
use crate::model::{
    EdgeParams, Link, LinkParams, QueueModel, Scenario, ServiceGraph, SCHEMA_VERSION,
};

/// One link `a -> b` carrying a single commodity produced at `a` and
/// consumed at `b`.
pub fn single_link(
    model: QueueModel,
    capacity: f64,
    cost: f64,
    arrival_rate: f64,
    size: f64,
    limit: f64,
) -> Scenario {
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "single-link".into(),
        resources: vec![resource("bw")],
        nodes: vec!["a".into(), "b".into()],
        links: vec![Link {
            from: "a".into(),
            to: "b".into(),
        }],
        compute_systems: Vec::new(),
        services: vec![ServiceGraph {
            id: "s".into(),
            arrival_rate,
            commodities: vec![delivered(sourced("k", "a"), "b", limit)],
        }],
        edge_params: EdgeParams {
            links: vec![LinkParams {
                from: "a".into(),
                to: "b".into(),
                queue_model: model,
                resource: "bw".into(),
                capacity,
                cost,
            }],
            compute: Vec::new(),
            data_sizes: BTreeMap::from([("k".into(), size)]),
            processing: Vec::new(),
        },
    }
}

/// A user `u` and two compute nodes `a` (cheap) and `b` (three times the
/// price) in a triangle; two single-function services start and end at
/// `u`. Each service has eight loop-free embeddings.
pub fn triangle() -> Scenario {
    let (links, link_params) = duplex(&[("u", "a"), ("u", "b"), ("a", "b")], 1000.0, 0.01);
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: "triangle".into(),
        resources: vec![resource("bw"), resource("cpu")],
        nodes: ["u", "a", "b"].map(String::from).to_vec(),
        links,
        compute_systems: vec![system("ca", "a", "cpu", None), system("cb", "b", "cpu", None)],
        services: vec![
            ServiceGraph {
                id: "s1".into(),
                arrival_rate: 10.0,
                commodities: vec![sourced("k1", "u"), delivered(commodity("k2", &["k1"]), "u", 0.2)],
            },
            ServiceGraph {
                id: "s2".into(),
                arrival_rate: 20.0,
                commodities: vec![sourced("k3", "u"), delivered(commodity("k4", &["k3"]), "u", 0.2)],
            },
        ],
        edge_params: EdgeParams {
            links: link_params,
            compute: vec![
                compute("ca", QueueModel::SR, "cpu", 45.0, 1.0),
                compute("cb", QueueModel::SR, "cpu", 200.0, 3.0),
            ],
            data_sizes: BTreeMap::from([
                ("k1".into(), 1.0),
                ("k2".into(), 1.0),
                ("k3".into(), 1.0),
                ("k4".into(), 1.0),
            ]),
            processing: vec![requirement("k2", "cpu", 1.0), requirement("k4", "cpu", 1.0)],
        },
    }
}
