//! Exact bicausal optimal transport between finite probability trees.

mod cost;
pub mod fixtures;
mod monotone;
mod plan;
pub mod random;
mod tree;

pub use cost::{check_quasi_monotone, CostFunctional, CostKind, QuasiMonotoneReport, RectangleWitness, StageCostFn};
pub use monotone::{check_stochastic_monotone, CrossingWitness, DominanceOrder, MonotoneVerdict, Monotonicity};
pub use plan::{
    antitone_then_monotone, exact_bicausal_value, knothe_rosenblatt, plan_cost, solve_small_transport, BicausalPlan,
    PlanBuilder, PlanDocument, PlanNode, PlanRecord, ATOM_CAP,
};
pub use tree::{mass, rational, FiniteAdaptedProcess, Mass, NodeRecord, ProcessBuilder, TreeDocument, TreeNode};
