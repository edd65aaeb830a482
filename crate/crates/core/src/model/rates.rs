use super::graph::AugmentedGraph;

/// Service rate per queue (resource units per second), indexed like
/// [`AugmentedGraph::queues`].
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub rates: Vec<f64>,
}

impl Allocation {
    pub fn zeros(g: &AugmentedGraph) -> Self {
        Allocation {
            rates: vec![0.0; g.queues.len()],
        }
    }

    /// Every queue at its capacity.
    pub fn capacity(g: &AugmentedGraph) -> Self {
        Allocation {
            rates: g.queues.iter().map(|q| q.capacity).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Allocation) -> f64 {
        self.rates
            .iter()
            .zip(&other.rates)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Stability margin ε per queue: utilization is kept at or below `1 - ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafetyMargins {
    pub eps: Vec<f64>,
}

impl SafetyMargins {
    pub fn uniform(g: &AugmentedGraph, eps: f64) -> Self {
        SafetyMargins {
            eps: vec![eps; g.queues.len()],
        }
    }
}
