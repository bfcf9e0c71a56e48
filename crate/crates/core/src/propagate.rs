//! Backward message passing over the trace DAG, generic over a propagator.
//!
//! [`backward`] seeds the output node with `propagator.init(feedback)` under
//! the source label "User", then pops nodes from a priority queue in strictly
//! decreasing creation index (creation order is topological, so every child
//! in the active region is processed before its parents). Each popped node's
//! propagator messages are appended to its parents' feedback stores under the
//! child's name, and parents not already queued are pushed.
//!
//! Two propagators are provided: the minimal-subgraph propagator, which
//! accumulates the (feedback, node set) pair connecting parameters to the
//! output, and a gradient propagator, which makes the same traversal perform
//! scalar reverse-mode differentiation.

use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use thiserror::Error;

use crate::graph::{
    Direction, FeedbackMessage, Graph, GraphError, Node, NodeId, NodeSet, TraceFeedback,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PropagateError {
    #[error("output node {0} carries un-cleared feedback; call zero_feedback between passes")]
    StaleFeedback(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("mixed feedback kinds at node '{node}': {detail}")]
    MixedFeedbackKinds { node: String, detail: String },
    #[error("operator '{0}' has no derivative rules")]
    NonDifferentiableOperator(String),
    #[error("derivative of operator '{operator}' failed: {message}")]
    DerivativeFailed { operator: String, message: String },
}

impl From<GraphError> for PropagateError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::UnknownNode(id) => PropagateError::UnknownNode(id),
            other => panic!("unexpected graph error during propagation: {other}"),
        }
    }
}

/// The propagator contract: how the output feedback is seeded and how a
/// node's received feedback turns into messages for its parents.
///
/// `propagate` must be pure given its node argument; it may read only the
/// node's value, operator, parents and feedback (resolving parents and the
/// operator through the graph).
pub trait Propagator {
    /// The message seeded at the output node.
    fn init(&self, feedback: &str) -> FeedbackMessage;

    /// Messages for each (unique) parent of `node`.
    fn propagate(
        &self,
        graph: &Graph,
        node: &Node,
    ) -> Result<BTreeMap<NodeId, FeedbackMessage>, PropagateError>;

    /// The merged message delivered at a trainable node itself.
    fn finalize(&self, graph: &Graph, node: &Node) -> Result<FeedbackMessage, PropagateError>;
}

/// Propagates (f, g): unions incoming subgraphs with the node and its
/// parents, delivering the same pair to every parent.
#[derive(Debug, Clone, Copy, Default)]
pub struct MinimalSubgraphPropagator;

/// The empty-subgraph seed `(f, {})`.
pub fn msp_init(feedback: &str) -> FeedbackMessage {
    FeedbackMessage::Subgraph(TraceFeedback {
        feedback: feedback.to_string(),
        nodes: NodeSet::new(),
    })
}

impl MinimalSubgraphPropagator {
    /// g' = {node} ∪ parents(node) ∪ (union of incoming sets); all incoming
    /// feedback texts must agree.
    fn merged(&self, node: &Node) -> Result<TraceFeedback, PropagateError> {
        let mut feedback: Option<&str> = None;
        let mut set = NodeSet::singleton(node.id);
        for parent in &node.parents {
            set.insert(*parent);
        }
        for message in node.feedback_messages() {
            let tf = match message {
                FeedbackMessage::Subgraph(tf) => tf,
                other => {
                    return Err(PropagateError::MixedFeedbackKinds {
                        node: node.name.clone(),
                        detail: format!(
                            "expected subgraph feedback, found {}",
                            feedback_kind(other)
                        ),
                    });
                }
            };
            match feedback {
                None => feedback = Some(&tf.feedback),
                Some(f) if f == tf.feedback => {}
                Some(f) => {
                    return Err(PropagateError::MixedFeedbackKinds {
                        node: node.name.clone(),
                        detail: format!(
                            "feedback texts differ: {:?} vs {:?}",
                            f, tf.feedback
                        ),
                    });
                }
            }
            set = set.union(&tf.nodes);
        }
        Ok(TraceFeedback {
            feedback: feedback.unwrap_or_default().to_string(),
            nodes: set,
        })
    }
}

impl Propagator for MinimalSubgraphPropagator {
    fn init(&self, feedback: &str) -> FeedbackMessage {
        msp_init(feedback)
    }

    fn propagate(
        &self,
        _graph: &Graph,
        node: &Node,
    ) -> Result<BTreeMap<NodeId, FeedbackMessage>, PropagateError> {
        if node.parents.is_empty() {
            return Ok(BTreeMap::new());
        }
        let merged = self.merged(node)?;
        Ok(node
            .parents
            .iter()
            .map(|&parent| (parent, FeedbackMessage::Subgraph(merged.clone())))
            .collect())
    }

    fn finalize(&self, _graph: &Graph, node: &Node) -> Result<FeedbackMessage, PropagateError> {
        Ok(FeedbackMessage::Subgraph(self.merged(node)?))
    }
}

/// Back-propagation as a propagator: parent `i` receives the local
/// derivative to input `i`, evaluated at the parent values, times the sum of
/// incoming gradients. Contributions of duplicate parents are summed.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradientPropagator;

impl GradientPropagator {
    fn incoming_sum(&self, node: &Node) -> Result<f64, PropagateError> {
        let mut sum = 0.0;
        for message in node.feedback_messages() {
            match message {
                FeedbackMessage::Gradient(g) => sum += g,
                other => {
                    return Err(PropagateError::MixedFeedbackKinds {
                        node: node.name.clone(),
                        detail: format!(
                            "expected gradient feedback, found {}",
                            feedback_kind(other)
                        ),
                    });
                }
            }
        }
        Ok(sum)
    }
}

impl Propagator for GradientPropagator {
    fn init(&self, _feedback: &str) -> FeedbackMessage {
        FeedbackMessage::Gradient(1.0)
    }

    fn propagate(
        &self,
        graph: &Graph,
        node: &Node,
    ) -> Result<BTreeMap<NodeId, FeedbackMessage>, PropagateError> {
        if node.parents.is_empty() {
            return Ok(BTreeMap::new());
        }
        let sum = self.incoming_sum(node)?;
        let op_id = node.operator.expect("non-root node has an operator");
        let operator = graph.operator(op_id)?;
        if !operator.differentiable() || node.code_parent.is_some() {
            return Err(PropagateError::NonDifferentiableOperator(
                operator.name.clone(),
            ));
        }
        let values: Vec<_> = node
            .parents
            .iter()
            .map(|&p| graph.node(p).map(|n| n.value.clone()))
            .collect::<Result<_, _>>()?;
        let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
        for (i, &parent) in node.parents.iter().enumerate() {
            let local = operator
                .derivative(i, &values)
                .expect("derivative rules cover every input position")
                .map_err(|message| PropagateError::DerivativeFailed {
                    operator: operator.name.clone(),
                    message,
                })?;
            *out.entry(parent).or_insert(0.0) += local * sum;
        }
        Ok(out
            .into_iter()
            .map(|(parent, g)| (parent, FeedbackMessage::Gradient(g)))
            .collect())
    }

    fn finalize(&self, _graph: &Graph, node: &Node) -> Result<FeedbackMessage, PropagateError> {
        Ok(FeedbackMessage::Gradient(self.incoming_sum(node)?))
    }
}

fn feedback_kind(message: &FeedbackMessage) -> &'static str {
    match message {
        FeedbackMessage::Text(_) => "text",
        FeedbackMessage::Subgraph(_) => "subgraph",
        FeedbackMessage::Gradient(_) => "gradient",
    }
}

/// Instrumentation counters for one backward run.
///
/// `stored_set_entries` is the peak number of membership entries pending at
/// any single node (a node holds at most one message per child, each of at
/// most N entries, so the peak is bounded by W·N for maximum degree W).
/// `heap_ops` counts queue pushes plus pops.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BackwardCost {
    pub stored_set_entries: usize,
    pub heap_ops: usize,
}

/// Result of one backward pass.
#[derive(Debug, Clone)]
pub struct BackwardRun {
    /// Final merged message at each trainable node reached from the output.
    /// Trainable nodes not reachable from the output are absent.
    pub delivered: BTreeMap<NodeId, FeedbackMessage>,
    /// Nodes in pop order (strictly decreasing creation index).
    pub pop_order: Vec<NodeId>,
    pub cost: BackwardCost,
}

impl BackwardRun {
    /// The (f, g) pair delivered at `param`, when the pass used the
    /// minimal-subgraph propagator and reached it.
    pub fn subgraph_at(&self, param: NodeId) -> Option<&TraceFeedback> {
        match self.delivered.get(&param) {
            Some(FeedbackMessage::Subgraph(tf)) => Some(tf),
            _ => None,
        }
    }

    /// The gradient delivered at `param`, when the pass used the gradient
    /// propagator and reached it.
    pub fn gradient_at(&self, param: NodeId) -> Option<f64> {
        match self.delivered.get(&param) {
            Some(FeedbackMessage::Gradient(g)) => Some(*g),
            _ => None,
        }
    }

    pub fn cost(&self) -> BackwardCost {
        self.cost
    }
}

/// Runs backward message passing from `output` with feedback text `feedback`.
///
/// The output must carry no un-cleared feedback from a previous pass.
pub fn backward(
    graph: &mut Graph,
    output: NodeId,
    feedback: &str,
    propagator: &dyn Propagator,
) -> Result<BackwardRun, PropagateError> {
    let output_node = graph.node(output)?;
    if output_node.has_feedback() {
        return Err(PropagateError::StaleFeedback(output));
    }

    let seed = propagator.init(feedback);
    let mut pending: HashMap<NodeId, usize> = HashMap::new();
    let mut peak = seed.entry_count();
    pending.insert(output, seed.entry_count());
    graph
        .add_feedback(output, "User", seed)
        .expect("output exists");

    let mut heap: BinaryHeap<NodeId> = BinaryHeap::new();
    let mut queued: HashSet<NodeId> = HashSet::new();
    let mut heap_ops = 0usize;
    heap.push(output);
    queued.insert(output);
    heap_ops += 1;

    let mut delivered = BTreeMap::new();
    let mut pop_order = Vec::new();

    while let Some(id) = heap.pop() {
        heap_ops += 1;
        queued.remove(&id);
        pending.remove(&id);
        pop_order.push(id);

        let (messages, trainable, child_name) = {
            let node = graph.node(id)?;
            let messages = propagator.propagate(graph, node)?;
            let merged = if node.trainable {
                Some(propagator.finalize(graph, node)?)
            } else {
                None
            };
            (messages, merged, node.name.clone())
        };
        if let Some(message) = trainable {
            delivered.insert(id, message);
        }
        for (parent, message) in messages {
            let entries = pending.entry(parent).or_insert(0);
            *entries += message.entry_count();
            peak = peak.max(*entries);
            graph
                .add_feedback(parent, &child_name, message)
                .expect("parent exists");
            if queued.insert(parent) {
                heap.push(parent);
                heap_ops += 1;
            }
        }
    }

    Ok(BackwardRun {
        delivered,
        pop_order,
        cost: BackwardCost {
            stored_set_entries: peak,
            heap_ops,
        },
    })
}

/// Computes the minimal subgraph between `params` and `output` directly
/// from its definition using reachability queries: the parameters, the
/// output, every node that is simultaneously an ancestor of the output and
/// a descendant of a parameter, plus the parents of those nodes and of the
/// output. Independent of [`backward`]; used as the test oracle.
pub fn minimal_subgraph_oracle(
    graph: &Graph,
    params: &[NodeId],
    output: NodeId,
) -> Result<NodeSet, PropagateError> {
    let mut set = NodeSet::from_iter(params.iter().copied());
    set.insert(output);
    let output_node = graph.node(output)?;
    for &p in &output_node.parents {
        set.insert(p);
    }
    let ancestors = graph.reachable_set(output, Direction::Ancestors)?;
    for &param in params {
        let descendants = graph.reachable_set(param, Direction::Descendants)?;
        for &z in descendants.intersection(&ancestors) {
            set.insert(z);
            for &p in &graph.node(z)?.parents {
                set.insert(p);
            }
        }
    }
    Ok(set)
}

/// Gradients of `output` with respect to every trainable parameter,
/// computed by running [`backward`] with the gradient propagator on a clone
/// of the graph (the original's feedback stores are untouched). Returns
/// `None` when some operator on the path is not differentiable.
pub fn try_gradients(graph: &Graph, output: NodeId) -> Option<BTreeMap<NodeId, f64>> {
    let mut scratch = graph.clone();
    let all: Vec<NodeId> = scratch.node_ids().collect();
    scratch.zero_feedback(&all);
    let run = backward(&mut scratch, output, "", &GradientPropagator).ok()?;
    let mut out = BTreeMap::new();
    for (id, message) in run.delivered {
        match message {
            FeedbackMessage::Gradient(g) => {
                out.insert(id, g);
            }
            _ => return None,
        }
    }
    Some(out)
}
