//! The execution-trace DAG: node creation, operator registration and
//! application, trainable parameters, exception nodes and per-node feedback
//! stores.
//!
//! A graph is built explicitly by registering operators and applying them to
//! existing nodes. Creation order is a topological order by construction:
//! every parent id is strictly smaller than every child id, so acyclicity
//! holds without any cycle checking. Values are copied into child nodes;
//! in-place mutation of an upstream value is unrepresentable.
//!
//! Mutation requires `&mut Graph` (single writer); read-only queries take
//! `&Graph` and may run concurrently.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::exprlang::{self, SyntaxError};
use crate::value::{is_valid_identifier, Value};

/// Identifier of one node. The index is the creation order, which is also
/// a valid topological order of the DAG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorId(usize);

/// A sorted, deduplicated set of node ids, stored as a vector and merged
/// pairwise. This is the representation propagated by the minimal-subgraph
/// propagator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeSet(Vec<NodeId>);

impl NodeSet {
    pub fn new() -> Self {
        NodeSet(Vec::new())
    }

    pub fn singleton(id: NodeId) -> Self {
        NodeSet(vec![id])
    }

    pub fn insert(&mut self, id: NodeId) {
        if let Err(pos) = self.0.binary_search(&id) {
            self.0.insert(pos, id);
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Merge of two sorted vectors.
    pub fn union(&self, other: &NodeSet) -> NodeSet {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.0[i..]);
        out.extend_from_slice(&other.0[j..]);
        NodeSet(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.0
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> Self {
        let mut v: Vec<NodeId> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }
}

/// The pair (f, g): output feedback text plus the minimal-subgraph node set
/// accumulated so far, kept sorted by creation index.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFeedback {
    pub feedback: String,
    pub nodes: NodeSet,
}

/// One message in a node's feedback store. A single backward pass uses one
/// propagator, so all messages of a pass share a variant.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackMessage {
    Text(String),
    Subgraph(TraceFeedback),
    Gradient(f64),
}

impl FeedbackMessage {
    /// Number of stored membership entries, used for space instrumentation.
    pub fn entry_count(&self) -> usize {
        match self {
            FeedbackMessage::Subgraph(tf) => tf.nodes.len(),
            _ => 1,
        }
    }
}

/// Operator arity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Fixed(usize),
    Variadic,
}

impl Arity {
    fn matches(self, n: usize) -> bool {
        match self {
            Arity::Fixed(k) => k == n,
            Arity::Variadic => true,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Fixed(k) => write!(f, "{k}"),
            Arity::Variadic => write!(f, "variadic"),
        }
    }
}

pub type ApplyFn = Arc<dyn Fn(&[Value]) -> Result<Value, String> + Send + Sync>;
/// Local derivative of the output with respect to one input position,
/// evaluated at the operator's input values.
pub type DerivFn = Arc<dyn Fn(&[Value]) -> Result<f64, String> + Send + Sync>;

/// A registered operator: a pure function plus the description recorded for
/// report rendering, and optional per-input derivative rules.
#[derive(Clone)]
pub struct Operator {
    pub id: OperatorId,
    pub name: String,
    pub description: String,
    pub source: Option<String>,
    pub arity: Arity,
    apply: ApplyFn,
    derivatives: Option<Vec<DerivFn>>,
}

impl Operator {
    pub fn differentiable(&self) -> bool {
        self.derivatives.is_some()
    }

    pub fn derivative(&self, input: usize, values: &[Value]) -> Option<Result<f64, String>> {
        self.derivatives
            .as_ref()
            .and_then(|rules| rules.get(input))
            .map(|rule| rule(values))
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("differentiable", &self.differentiable())
            .finish()
    }
}

/// Everything needed to register an operator.
#[derive(Clone)]
pub struct OperatorSpec {
    pub name: String,
    pub description: String,
    pub arity: Arity,
    pub apply: ApplyFn,
    pub derivatives: Option<Vec<DerivFn>>,
    pub source: Option<String>,
}

impl OperatorSpec {
    pub fn new(
        name: &str,
        description: &str,
        arity: Arity,
        apply: impl Fn(&[Value]) -> Result<Value, String> + Send + Sync + 'static,
    ) -> Self {
        OperatorSpec {
            name: name.to_string(),
            description: description.to_string(),
            arity,
            apply: Arc::new(apply),
            derivatives: None,
            source: None,
        }
    }

    pub fn with_derivatives(mut self, rules: Vec<DerivFn>) -> Self {
        self.derivatives = Some(rules);
        self
    }

    pub fn with_source(mut self, source: &str) -> Self {
        self.source = Some(source.to_string());
        self
    }
}

/// One vertex of the trace DAG.
#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub value: Value,
    pub trainable: bool,
    pub description: Option<String>,
    pub constraint: Option<String>,
    pub operator: Option<OperatorId>,
    pub parents: Vec<NodeId>,
    /// Which parent, if any, is the code parameter attached per the
    /// extra-parent rule. Reports exclude it from operator argument lists.
    pub code_parent: Option<NodeId>,
    pub is_exception: bool,
    pub feedback: BTreeMap<String, Vec<FeedbackMessage>>,
}

impl Node {
    pub fn is_root(&self) -> bool {
        self.operator.is_none()
    }

    pub fn feedback_messages(&self) -> impl Iterator<Item = &FeedbackMessage> {
        self.feedback.values().flatten()
    }

    pub fn has_feedback(&self) -> bool {
        self.feedback.values().any(|msgs| !msgs.is_empty())
    }
}

/// Options for [`Graph::create_node`].
#[derive(Debug, Clone, Default)]
pub struct NodeOptions {
    pub name: Option<String>,
    pub trainable: bool,
    pub description: Option<String>,
    pub constraint: Option<String>,
}

impl NodeOptions {
    pub fn named(name: &str) -> Self {
        NodeOptions {
            name: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn trainable(mut self) -> Self {
        self.trainable = true;
        self
    }

    pub fn with_description(mut self, description: &str) -> Self {
        self.description = Some(description.to_string());
        self
    }

    pub fn with_constraint(mut self, constraint: &str) -> Self {
        self.constraint = Some(constraint.to_string());
        self
    }
}

/// Options for [`Graph::apply`].
#[derive(Debug, Clone, Default)]
pub struct ApplyOptions {
    pub name: Option<String>,
    pub code_param: Option<NodeId>,
}

impl ApplyOptions {
    pub fn named(name: &str) -> Self {
        ApplyOptions {
            name: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn with_code_param(mut self, code: NodeId) -> Self {
        self.code_param = Some(code);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ancestors,
    Descendants,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("duplicate name '{0}'")]
    DuplicateName(String),
    #[error("invalid identifier '{0}'")]
    InvalidIdentifier(String),
    #[error("code value does not parse: {0}")]
    InvalidCode(SyntaxError),
    #[error("number values must be finite")]
    NonFiniteNumber,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown operator")]
    UnknownOperator,
    #[error("operator '{operator}' expects {expected} input(s), got {got}")]
    ArityMismatch {
        operator: String,
        expected: String,
        got: usize,
    },
    #[error("node {0} is not a code value and cannot be a code parameter")]
    InvalidCodeParameter(NodeId),
    #[error("operator '{0}' derivative rules must cover every input position")]
    DerivativeArity(String),
    #[error("execution trapped at exception node {node}: {message}")]
    ExecutionTrapped { node: NodeId, message: String },
    #[error("an exception node ({0}) is active; the trace ends there until feedback is cleared")]
    ExceptionActive(NodeId),
    #[error("node {0} is not a trainable parameter")]
    NotTrainable(NodeId),
}

/// The computational DAG.
#[derive(Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    children: Vec<Vec<NodeId>>,
    names: HashMap<String, NodeId>,
    operators: Vec<Operator>,
    operator_names: HashMap<String, OperatorId>,
    active_exception: Option<NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(id.0).ok_or(GraphError::UnknownNode(id))
    }

    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        self.names.get(name).map(|id| &self.nodes[id.0])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn children(&self, id: NodeId) -> Result<&[NodeId], GraphError> {
        self.children
            .get(id.0)
            .map(|v| v.as_slice())
            .ok_or(GraphError::UnknownNode(id))
    }

    pub fn operator(&self, id: OperatorId) -> Result<&Operator, GraphError> {
        self.operators.get(id.0).ok_or(GraphError::UnknownOperator)
    }

    pub fn operator_by_name(&self, name: &str) -> Option<&Operator> {
        self.operator_names.get(name).map(|id| &self.operators[id.0])
    }

    /// The exception node created by the most recent trapped application,
    /// if feedback has not been cleared since.
    pub fn active_exception(&self) -> Option<NodeId> {
        self.active_exception
    }

    /// Creates a root node. Auto-names use `<value kind><creation index>`
    /// ("float0"); explicit names win and must be unused identifiers.
    pub fn create_node(&mut self, value: Value, options: NodeOptions) -> Result<NodeId, GraphError> {
        if let Value::Code(src) = &value {
            exprlang::parse(src).map_err(GraphError::InvalidCode)?;
        }
        if !value.is_finite() {
            return Err(GraphError::NonFiniteNumber);
        }
        let id = NodeId(self.nodes.len());
        let name = self.resolve_name(options.name, &value, id)?;
        self.insert_node(Node {
            id,
            name,
            value,
            trainable: options.trainable,
            description: options.description,
            constraint: options.constraint,
            operator: None,
            parents: Vec::new(),
            code_parent: None,
            is_exception: false,
            feedback: BTreeMap::new(),
        });
        Ok(id)
    }

    fn resolve_name(
        &self,
        requested: Option<String>,
        value: &Value,
        id: NodeId,
    ) -> Result<String, GraphError> {
        match requested {
            Some(name) => {
                if !is_valid_identifier(&name) {
                    return Err(GraphError::InvalidIdentifier(name));
                }
                if self.names.contains_key(&name) {
                    return Err(GraphError::DuplicateName(name));
                }
                Ok(name)
            }
            None => {
                let base = format!("{}{}", value.kind(), id.0);
                if !self.names.contains_key(&base) {
                    return Ok(base);
                }
                // A user name squatted the auto-name; disambiguate.
                let mut k = 1usize;
                loop {
                    let candidate = format!("{base}_{k}");
                    if !self.names.contains_key(&candidate) {
                        return Ok(candidate);
                    }
                    k += 1;
                }
            }
        }
    }

    fn insert_node(&mut self, node: Node) {
        debug_assert_eq!(node.id.0, self.nodes.len());
        for parent in &node.parents {
            self.children[parent.0].push(node.id);
        }
        self.names.insert(node.name.clone(), node.id);
        self.nodes.push(node);
        self.children.push(Vec::new());
    }

    /// Registers an operator. Operators share one namespace per graph.
    pub fn register_operator(&mut self, spec: OperatorSpec) -> Result<OperatorId, GraphError> {
        if !is_valid_identifier(&spec.name) {
            return Err(GraphError::InvalidIdentifier(spec.name));
        }
        if self.operator_names.contains_key(&spec.name) {
            return Err(GraphError::DuplicateName(spec.name));
        }
        if let Some(rules) = &spec.derivatives {
            match spec.arity {
                Arity::Fixed(k) if rules.len() == k => {}
                _ => return Err(GraphError::DerivativeArity(spec.name)),
            }
        }
        let id = OperatorId(self.operators.len());
        self.operator_names.insert(spec.name.clone(), id);
        self.operators.push(Operator {
            id,
            name: spec.name,
            description: spec.description,
            source: spec.source,
            arity: spec.arity,
            apply: spec.apply,
            derivatives: spec.derivatives,
        });
        Ok(id)
    }

    /// Applies an operator to existing nodes and returns the child node.
    ///
    /// With a code parameter, that node becomes an additional parent and
    /// the operator's function is replaced by interpreting the code over
    /// the input values.
    ///
    /// On an execution error (including a NaN/Inf result) the graph instead
    /// gains an exception node holding the error text, with the failing
    /// inputs as parents, and `ExecutionTrapped` is returned. The trace ends
    /// there: no further applications are accepted until feedback is
    /// cleared.
    pub fn apply(
        &mut self,
        op: OperatorId,
        inputs: &[NodeId],
        options: ApplyOptions,
    ) -> Result<NodeId, GraphError> {
        if let Some(exc) = self.active_exception {
            return Err(GraphError::ExceptionActive(exc));
        }
        let operator = self.operator(op)?.clone();
        for &input in inputs {
            let node = self.node(input)?;
            if node.is_exception {
                return Err(GraphError::ExceptionActive(input));
            }
        }
        if !operator.arity.matches(inputs.len()) {
            return Err(GraphError::ArityMismatch {
                operator: operator.name.clone(),
                expected: operator.arity.to_string(),
                got: inputs.len(),
            });
        }
        // Unitary output over no inputs would create a parentless non-root.
        if inputs.is_empty() && options.code_param.is_none() {
            return Err(GraphError::ArityMismatch {
                operator: operator.name.clone(),
                expected: "at least 1".to_string(),
                got: 0,
            });
        }
        let code = match options.code_param {
            Some(code_id) => {
                let node = self.node(code_id)?;
                match &node.value {
                    Value::Code(src) => Some((code_id, src.clone())),
                    _ => return Err(GraphError::InvalidCodeParameter(code_id)),
                }
            }
            None => None,
        };

        let values: Vec<Value> = inputs
            .iter()
            .map(|&id| self.nodes[id.0].value.clone())
            .collect();
        let result = match &code {
            Some((_, src)) => {
                let program = exprlang::parse(src).expect("stored code always parses");
                exprlang::evaluate(&program, &values, exprlang::DEFAULT_STEP_LIMIT)
                    .map_err(|e| e.to_string())
            }
            None => (operator.apply)(&values),
        };
        let result = result.and_then(|value| {
            if value.is_finite() {
                Ok(value)
            } else {
                Err(format!(
                    "non-finite number produced by operator '{}'",
                    operator.name
                ))
            }
        });

        let mut parents = inputs.to_vec();
        let code_parent = code.as_ref().map(|(id, _)| *id);
        if let Some(code_id) = code_parent {
            parents.push(code_id);
        }

        match result {
            Ok(value) => {
                let id = NodeId(self.nodes.len());
                let name = self.resolve_name(options.name, &value, id)?;
                self.insert_node(Node {
                    id,
                    name,
                    value,
                    trainable: false,
                    description: None,
                    constraint: None,
                    operator: Some(op),
                    parents,
                    code_parent,
                    is_exception: false,
                    feedback: BTreeMap::new(),
                });
                Ok(id)
            }
            Err(message) => {
                let id = NodeId(self.nodes.len());
                let value = Value::Text(message.clone());
                let name = self.resolve_name(options.name, &value, id)?;
                self.insert_node(Node {
                    id,
                    name,
                    value,
                    trainable: false,
                    description: None,
                    constraint: None,
                    operator: Some(op),
                    parents,
                    code_parent,
                    is_exception: true,
                    feedback: BTreeMap::new(),
                });
                self.active_exception = Some(id);
                Err(GraphError::ExecutionTrapped { node: id, message })
            }
        }
    }

    /// Shorthand for [`Graph::apply`] without options.
    pub fn apply_operator(&mut self, op: OperatorId, inputs: &[NodeId]) -> Result<NodeId, GraphError> {
        self.apply(op, inputs, ApplyOptions::default())
    }

    /// Appends a feedback message under `source`, preserving order.
    pub fn add_feedback(
        &mut self,
        node: NodeId,
        source: &str,
        message: FeedbackMessage,
    ) -> Result<(), GraphError> {
        self.node(node)?;
        self.nodes[node.0]
            .feedback
            .entry(source.to_string())
            .or_default()
            .push(message);
        Ok(())
    }

    /// Clears the feedback stores of the given nodes, of all their
    /// descendants, and of the parents of those descendants. Called with a
    /// parameter set, this empties every node of the previous backward
    /// pass's minimal subgraph (boundary inputs included). Also closes the
    /// current exception epoch.
    pub fn zero_feedback(&mut self, nodes: &[NodeId]) {
        let mut to_clear: BTreeSet<NodeId> = nodes.iter().copied().collect();
        for &start in nodes {
            if start.0 >= self.nodes.len() {
                continue;
            }
            if let Ok(descendants) = self.reachable_set(start, Direction::Descendants) {
                for d in descendants {
                    to_clear.insert(d);
                    to_clear.extend(self.nodes[d.0].parents.iter().copied());
                }
            }
        }
        for id in to_clear {
            if id.0 < self.nodes.len() {
                self.nodes[id.0].feedback.clear();
            }
        }
        self.active_exception = None;
    }

    /// Transitive closure following parent (ancestors) or child
    /// (descendants) edges, excluding the node itself.
    pub fn reachable_set(
        &self,
        node: NodeId,
        direction: Direction,
    ) -> Result<BTreeSet<NodeId>, GraphError> {
        self.node(node)?;
        let mut seen = BTreeSet::new();
        let mut stack = vec![node];
        while let Some(current) = stack.pop() {
            let next: &[NodeId] = match direction {
                Direction::Ancestors => &self.nodes[current.0].parents,
                Direction::Descendants => &self.children[current.0],
            };
            for &n in next {
                if seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.remove(&node);
        Ok(seen)
    }

    /// Replaces the value of a trainable parameter. Code values must parse;
    /// numbers must be finite.
    pub fn set_value(&mut self, node: NodeId, value: Value) -> Result<(), GraphError> {
        let n = self.node(node)?;
        if !n.trainable {
            return Err(GraphError::NotTrainable(node));
        }
        if let Value::Code(src) = &value {
            exprlang::parse(src).map_err(GraphError::InvalidCode)?;
        }
        if !value.is_finite() {
            return Err(GraphError::NonFiniteNumber);
        }
        self.nodes[node.0].value = value;
        Ok(())
    }

    /// Structural invariant check used by tests: acyclicity by id order,
    /// name bijection, root/operator consistency and exception truncation.
    pub fn validate(&self) -> Result<(), String> {
        for node in &self.nodes {
            for parent in &node.parents {
                if parent.0 >= node.id.0 {
                    return Err(format!("edge {} -> {} violates id order", parent, node.id));
                }
            }
            if node.operator.is_none() && !node.parents.is_empty() {
                return Err(format!("root node {} has parents", node.id));
            }
            if node.operator.is_some() && node.parents.is_empty() {
                return Err(format!("non-root node {} has no parents", node.id));
            }
            if node.is_exception {
                if !matches!(node.value, Value::Text(_)) {
                    return Err(format!("exception node {} must hold text", node.id));
                }
                if !self.children[node.id.0].is_empty() {
                    return Err(format!("exception node {} has descendants", node.id));
                }
            }
            if self.names.get(&node.name) != Some(&node.id) {
                return Err(format!("name '{}' does not map back to {}", node.name, node.id));
            }
        }
        if self.names.len() != self.nodes.len() {
            return Err("node names are not a bijection".to_string());
        }
        Ok(())
    }
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("operators", &self.operators.len())
            .finish()
    }
}
