//! Randomized rounding: decompose fractional flows into weighted integral
//! embeddings per service and sample one embedding per service.

use std::collections::BTreeSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AugNode, AugmentedGraph, EdgeKind, FlowAssignment};
use crate::{Error, Result};

/// Flows below this are treated as zero while peeling.
const PEEL_TOL: f64 = 1e-9;
/// Largest unexplained demand accepted after decomposition.
pub const DECOMPOSITION_TOL: f64 = 1e-4;

/// One integral way of serving a service, with its share of the flow.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub weight: f64,
    /// (edge, commodity) pairs carrying the full flow.
    pub arcs: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    /// Embeddings of each service, weights normalized to sum to one.
    pub services: Vec<Vec<Embedding>>,
}

impl Decomposition {
    /// Number of distinct integral assignments in the support.
    pub fn combinations(&self) -> usize {
        self.services
            .iter()
            .map(|e| e.len().max(1))
            .fold(1usize, |a, b| a.saturating_mul(b))
    }

    /// Every assignment in the support, or `None` above `limit`.
    pub fn enumerate(&self, g: &AugmentedGraph, limit: usize) -> Option<Vec<FlowAssignment>> {
        if self.combinations() > limit {
            return None;
        }
        let mut out = vec![FlowAssignment::zeros(g)];
        for embeddings in self.services.iter().filter(|e| !e.is_empty()) {
            out = out
                .iter()
                .flat_map(|f| {
                    embeddings.iter().map(move |e| {
                        let mut f = f.clone();
                        for &(a, k) in &e.arcs {
                            f.set(a, k, 1.0);
                        }
                        f
                    })
                })
                .collect();
        }
        Some(out)
    }

    /// Draws one embedding per service.
    pub fn sample(&self, g: &AugmentedGraph, rng: &mut ChaCha8Rng) -> FlowAssignment {
        let mut f = FlowAssignment::zeros(g);
        for embeddings in &self.services {
            if embeddings.is_empty() {
                continue;
            }
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = embeddings.len() - 1;
            for (i, e) in embeddings.iter().enumerate() {
                acc += e.weight;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            for &(e, k) in &embeddings[pick].arcs {
                f.set(e, k, 1.0);
            }
        }
        f
    }
}

/// Peels `flows` into embeddings, one service at a time.
pub fn decompose(g: &AugmentedGraph, flows: &FlowAssignment) -> Result<Decomposition> {
    let mut residual = flows.clone();
    let mut services = Vec::with_capacity(g.services.len());
    for s in 0..g.services.len() {
        let dests: Vec<usize> = g
            .service_commodities(s)
            .into_iter()
            .filter(|&k| g.commodities[k].destination.is_some())
            .collect();
        let mut found: Vec<Embedding> = Vec::new();
        loop {
            let mut arcs = BTreeSet::new();
            let mut ok = true;
            for &k in &dests {
                let (sink, u) = sink_edge(g, k);
                if residual.get(sink, k) <= PEEL_TOL {
                    ok = false;
                    break;
                }
                arcs.insert((sink, k));
                let mut visited = BTreeSet::from([u]);
                match trace(g, &residual, k, u, &mut visited) {
                    Some(path) => arcs.extend(path),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let weight = arcs
                .iter()
                .map(|&(e, k)| residual.get(e, k))
                .fold(f64::INFINITY, f64::min);
            if weight <= PEEL_TOL {
                break;
            }
            for &(e, k) in &arcs {
                residual.set(e, k, residual.get(e, k) - weight);
            }
            match found.iter_mut().find(|x| x.arcs == arcs) {
                Some(x) => x.weight += weight,
                None => found.push(Embedding { weight, arcs }),
            }
        }
        let left: f64 = dests
            .iter()
            .map(|&k| residual.get(sink_edge(g, k).0, k).max(0.0))
            .fold(0.0, f64::max);
        // Every service must be served in full.
        let total: f64 = found.iter().map(|x| x.weight).sum();
        let left = left.max(if dests.is_empty() { 0.0 } else { (1.0 - total).abs() });
        if left > DECOMPOSITION_TOL {
            return Err(Error::Rounding(left));
        }
        for x in &mut found {
            x.weight /= total;
        }
        services.push(found);
    }
    Ok(Decomposition { services })
}

/// Consumption edge of destination commodity `k` and its network node.
fn sink_edge(g: &AugmentedGraph, k: usize) -> (usize, usize) {
    let u = g.commodities[k].destination.expect("destination commodity");
    let e = *g.out_edges[u]
        .iter()
        .find(|&&e| g.edges[e].kind == EdgeKind::Sink)
        .expect("every network node has a consumption edge");
    (e, u)
}

/// Follows positive residual flow of `k` backwards from network node `u` to
/// where `k` is produced, recursing into the inputs at computation nodes.
fn trace(
    g: &AugmentedGraph,
    residual: &FlowAssignment,
    k: usize,
    u: usize,
    visited: &mut BTreeSet<usize>,
) -> Option<Vec<(usize, usize)>> {
    let mut candidates: Vec<usize> = g.in_edges[u]
        .iter()
        .copied()
        .filter(|&e| residual.get(e, k) > PEEL_TOL)
        .collect();
    // Largest residual first; ties by edge index.
    candidates.sort_by(|&a, &b| residual.get(b, k).total_cmp(&residual.get(a, k)).then(a.cmp(&b)));
    for e in candidates {
        let edge = &g.edges[e];
        match edge.kind {
            EdgeKind::Source => return Some(vec![(e, k)]),
            EdgeKind::CompOut => {
                let p = edge.tail;
                let inb = g.in_edges[p][0];
                let mut arcs = vec![(e, k)];
                let mut ok = true;
                for &l in &g.commodities[k].inputs {
                    if residual.get(inb, l) <= PEEL_TOL {
                        ok = false;
                        break;
                    }
                    arcs.push((inb, l));
                    let mut seen = BTreeSet::from([u]);
                    match trace(g, residual, l, u, &mut seen) {
                        Some(path) => arcs.extend(path),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    return Some(arcs);
                }
            }
            EdgeKind::Comm => {
                let v = edge.tail;
                debug_assert!(matches!(g.nodes[v], AugNode::Network(_)));
                if !visited.insert(v) {
                    continue;
                }
                if let Some(mut path) = trace(g, residual, k, v, visited) {
                    path.push((e, k));
                    return Some(path);
                }
                visited.remove(&v);
            }
            EdgeKind::CompIn | EdgeKind::Sink => {}
        }
    }
    None
}

/// Rounds fractional flows to one integral embedding per service. Integral
/// input is returned unchanged.
pub fn round_flows(g: &AugmentedGraph, flows: &FlowAssignment, seed: u64) -> Result<FlowAssignment> {
    if flows.is_integral(0.0) {
        return Ok(flows.clone());
    }
    let d = decompose(g, flows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(d.sample(g, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_augmented_graph, flow_violation};
    use crate::scenarios::small::triangle;

    fn route(g: &AugmentedGraph, f: &mut FlowAssignment, k: &str, labels: &[&str], w: f64) {
        let k = g.commodity_index(k).unwrap();
        for l in labels {
            let e = g.edge_index(l).unwrap_or_else(|| panic!("no edge {l}"));
            f.set(e, k, f.get(e, k) + w);
        }
    }

    /// s1 split between the direct placements on `a` and `b`; s2 on `a`.
    fn split(g: &AugmentedGraph, wa: f64) -> FlowAssignment {
        let mut f = FlowAssignment::zeros(g);
        for (node, sys, w) in [("a", "ca", wa), ("b", "cb", 1.0 - wa)] {
            let p = format!("p({node},{sys})");
            route(g, &mut f, "k1", &["s(u)->u", &format!("u->{node}"), &format!("{node}->{p}")], w);
            route(g, &mut f, "k2", &[&format!("{p}->{node}"), &format!("{node}->u"), "u->d(u)"], w);
        }
        route(g, &mut f, "k3", &["s(u)->u", "u->a", "a->p(a,ca)"], 1.0);
        route(g, &mut f, "k4", &["p(a,ca)->a", "a->u", "u->d(u)"], 1.0);
        f
    }

    #[test]
    fn integral_input_unchanged() {
        let g = build_augmented_graph(&triangle()).unwrap();
        let f = split(&g, 1.0);
        assert!(flow_violation(&g, &f) < 1e-12);
        assert_eq!(round_flows(&g, &f, 7).unwrap(), f);
        let d = decompose(&g, &f).unwrap();
        assert!(d.services.iter().all(|s| s.len() == 1 && s[0].weight == 1.0));
    }

    #[test]
    fn split_decomposes_into_two_embeddings() {
        let g = build_augmented_graph(&triangle()).unwrap();
        let f = split(&g, 0.7);
        assert!(flow_violation(&g, &f) < 1e-12);
        let d = decompose(&g, &f).unwrap();
        let mut weights: Vec<f64> = d.services[0].iter().map(|e| e.weight).collect();
        weights.sort_by(f64::total_cmp);
        assert_eq!(weights.len(), 2);
        assert!((weights[0] - 0.3).abs() < 1e-12 && (weights[1] - 0.7).abs() < 1e-12);
        assert_eq!(d.services[1].len(), 1);
        for seed in 0..20 {
            let r = round_flows(&g, &f, seed).unwrap();
            assert!(r.is_integral(0.0));
            assert_eq!(flow_violation(&g, &r), 0.0);
            assert!(r.max_abs_diff(&split(&g, 1.0)) == 0.0 || r.max_abs_diff(&split(&g, 0.0)) == 0.0);
        }
    }

    #[test]
    fn same_seed_same_draw() {
        let g = build_augmented_graph(&triangle()).unwrap();
        let f = split(&g, 0.5);
        let a: Vec<_> = (0..10).map(|s| round_flows(&g, &f, s).unwrap()).collect();
        let b: Vec<_> = (0..10).map(|s| round_flows(&g, &f, s).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn broken_flow_is_rejected() {
        let g = build_augmented_graph(&triangle()).unwrap();
        let mut f = split(&g, 0.7);
        let k = g.commodity_index("k2").unwrap();
        f.set(g.edge_index("u->d(u)").unwrap(), k, 0.2);
        assert!(matches!(decompose(&g, &f), Err(Error::Rounding(_))));
    }

    #[test]
    fn enumeration_covers_the_support() {
        let g = build_augmented_graph(&triangle()).unwrap();
        let d = decompose(&g, &split(&g, 0.7)).unwrap();
        assert_eq!(d.combinations(), 2);
        assert!(d.enumerate(&g, 1).is_none());
        let all = d.enumerate(&g, 2).unwrap();
        assert_eq!(all.len(), 2);
        assert_ne!(all[0], all[1]);
        for f in &all {
            assert!(flow_violation(&g, f) < 1e-12);
            assert!(f.is_integral(0.0));
        }
    }
}
