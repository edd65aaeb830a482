use crate::model::{Allocation, AugmentedGraph, FlowAssignment};

/// Allocation cost `Σ_edges F_e Σ_queues c_q μ_q`, with `F_e` the largest
/// flow fraction on the edge.
pub fn objective_cost(g: &AugmentedGraph, flows: &FlowAssignment, alloc: &Allocation) -> f64 {
    g.queues
        .iter()
        .enumerate()
        .map(|(q, queue)| flows.edge_max(queue.edge) * queue.cost * alloc.rates[q])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_augmented_graph, QueueModel};
    use crate::scenarios::small::single_link;

    #[test]
    fn examples() {
        let g = build_augmented_graph(&single_link(QueueModel::SR, 100.0, 3.0, 10.0, 1.0, 0.1)).unwrap();
        let mut f = FlowAssignment::zeros(&g);
        let mut mu = Allocation::zeros(&g);
        assert_eq!(objective_cost(&g, &f, &mu), 0.0);
        let e = g.edge_index("a->b").unwrap();
        f.set(e, 0, 1.0);
        mu.rates[g.edges[e].queues[0]] = 20.0;
        assert_eq!(objective_cost(&g, &f, &mu), 60.0);
        // Idle edges are not paid for.
        f.set(e, 0, 0.0);
        assert_eq!(objective_cost(&g, &f, &mu), 0.0);
    }
}
