//! Core engine for execution-trace optimization: a computational DAG that
//! records heterogeneous computations, backward feedback propagation via
//! minimal-subgraph extraction (with back-propagation as a special case),
//! a small expression language for code-valued parameters, and rendering of
//! the sectioned problem reports consumed by optimizers.

pub mod exprlang;
pub mod graph;
pub mod ops;
pub mod propagate;
pub mod report;
pub mod value;

pub use graph::{
    ApplyOptions, Arity, Direction, FeedbackMessage, Graph, GraphError, Node, NodeId, NodeOptions,
    NodeSet, Operator, OperatorId, OperatorSpec, TraceFeedback,
};
pub use propagate::{
    backward, minimal_subgraph_oracle, try_gradients, BackwardCost, BackwardRun,
    GradientPropagator, MinimalSubgraphPropagator, PropagateError, Propagator,
};
pub use report::{
    build_report, classify, export_dot, render_report, NodeRole, ProblemReport, ReportError,
};
pub use value::Value;
