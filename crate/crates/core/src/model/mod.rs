//! Scenario description, validation and the augmented graph.

mod graph;
mod rates;
mod scenario;

pub use graph::{
    arrival_rates, build_augmented_graph, flow_violation, AugNode, AugmentedEdge,
    AugmentedGraph, CommodityInfo, EdgeKind, EdgeResource, FlowAssignment, Queue,
};
pub use rates::{Allocation, SafetyMargins};
pub use scenario::{
    validate_scenario, Commodity, CommodityId, ComputeParams, ComputeSystem, EdgeParams, Link,
    LinkParams, NetworkGraph, NodeId, ProcessingRequirement, QueueModel, Resource, ResourceId,
    Scenario, ServiceGraph, ServiceId, SystemId, Violation, SCHEMA_VERSION,
};
