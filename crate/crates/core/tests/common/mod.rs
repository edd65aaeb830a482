#![allow(dead_code)]

use sparq_core::model::{AugmentedGraph, EdgeKind, FlowAssignment};
use sparq_core::optimizer::{allocate_rates, SolveOptions};
use sparq_core::SafetyMargins;

/// Adds `w` to commodity `k` on each labelled edge.
pub fn route(g: &AugmentedGraph, f: &mut FlowAssignment, k: &str, labels: &[&str], w: f64) {
    let k = g.commodity_index(k).unwrap_or_else(|| panic!("no commodity {k}"));
    for l in labels {
        let e = g.edge_index(l).unwrap_or_else(|| panic!("no edge {l}"));
        f.set(e, k, f.get(e, k) + w);
    }
}

/// Experiment A with the first service on the cloud node and the second
/// split `w_cloud` / `1 - w_cloud` between the cloud and the edge node.
pub fn experiment_a_split(g: &AugmentedGraph, w_cloud: f64) -> FlowAssignment {
    let mut f = FlowAssignment::zeros(g);
    let to_cloud = ["s(u)->u", "u->r1", "r1->r2", "r2->n", "n->p(n,cloud)"];
    let from_cloud = ["p(n,cloud)->n", "n->r2", "r2->r1", "r1->u", "u->d(u)"];
    let to_edge = ["s(u)->u", "u->r1", "r1->e", "e->p(e,edge)"];
    let from_edge = ["p(e,edge)->e", "e->r1", "r1->u", "u->d(u)"];
    route(g, &mut f, "k1", &to_cloud, 1.0);
    route(g, &mut f, "k2", &from_cloud, 1.0);
    route(g, &mut f, "k3", &to_cloud, w_cloud);
    route(g, &mut f, "k4", &from_cloud, w_cloud);
    route(g, &mut f, "k3", &to_edge, 1.0 - w_cloud);
    route(g, &mut f, "k4", &from_edge, 1.0 - w_cloud);
    f
}

/// Loop-free network paths from `from` to `to`, as edge lists.
fn simple_paths(g: &AugmentedGraph, from: usize, to: usize) -> Vec<Vec<usize>> {
    fn walk(g: &AugmentedGraph, at: usize, to: usize, seen: &mut Vec<usize>, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == to {
            out.push(path.clone());
            return;
        }
        for &e in &g.out_edges[at] {
            let edge = &g.edges[e];
            if edge.kind != EdgeKind::Comm || seen.contains(&edge.head) {
                continue;
            }
            seen.push(edge.head);
            path.push(e);
            walk(g, edge.head, to, seen, path, out);
            path.pop();
            seen.pop();
        }
    }
    let mut out = Vec::new();
    walk(g, from, to, &mut vec![from], &mut Vec::new(), &mut out);
    out
}

/// Every integral embedding of a service made of one source commodity and
/// one processed destination commodity, as `(edge, commodity)` arcs.
pub fn chain_embeddings(g: &AugmentedGraph, service: usize) -> Vec<Vec<(usize, usize)>> {
    let ks = g.service_commodities(service);
    let src = *ks.iter().find(|&&k| g.commodities[k].is_source()).expect("source");
    let dst = *ks.iter().find(|&&k| g.commodities[k].destination.is_some()).expect("destination");
    assert_eq!(g.commodities[dst].inputs, vec![src], "chain services only");
    let u_src = g.commodities[src].source.unwrap();
    let u_dst = g.commodities[dst].destination.unwrap();
    let source_edge = *g.in_edges[u_src].iter().find(|&&e| g.edges[e].kind == EdgeKind::Source).unwrap();
    let sink_edge = *g.out_edges[u_dst].iter().find(|&&e| g.edges[e].kind == EdgeKind::Sink).unwrap();

    let mut out = Vec::new();
    for (e_out, edge) in g.edges.iter().enumerate() {
        if edge.kind != EdgeKind::CompOut || !edge.allowed[dst] {
            continue;
        }
        let x = edge.head;
        let e_in = g.in_edges[edge.tail][0];
        for to in simple_paths(g, u_src, x) {
            for back in simple_paths(g, x, u_dst) {
                let mut arcs = vec![(source_edge, src), (e_in, src), (e_out, dst), (sink_edge, dst)];
                arcs.extend(to.iter().map(|&e| (e, src)));
                arcs.extend(back.iter().map(|&e| (e, dst)));
                out.push(arcs);
            }
        }
    }
    out
}

/// Cheapest cost over all combinations of per-service embeddings, each
/// priced by the same rate allocation SPARQ uses after rounding. Returns
/// `(best cost, combinations tried, feasible combinations)`.
pub fn brute_force(g: &AugmentedGraph, o: &SolveOptions) -> (f64, usize, usize) {
    let per_service: Vec<Vec<Vec<(usize, usize)>>> =
        (0..g.services.len()).map(|s| chain_embeddings(g, s)).collect();
    let total: usize = per_service.iter().map(Vec::len).product();
    let start = SafetyMargins::uniform(g, o.eps_init);
    let mut best = f64::INFINITY;
    let mut feasible = 0;
    for mut index in 0..total {
        let mut f = FlowAssignment::zeros(g);
        for embeddings in &per_service {
            for &(e, k) in &embeddings[index % embeddings.len()] {
                f.set(e, k, 1.0);
            }
            index /= embeddings.len();
        }
        if let Some(r) = allocate_rates(g, &f, &start, o).expect("rate allocation") {
            feasible += 1;
            best = best.min(r.cost);
        }
    }
    (best, total, feasible)
}
