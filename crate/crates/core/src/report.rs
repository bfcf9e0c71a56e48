//! Classifies minimal-subgraph nodes into report roles and renders the
//! sectioned problem report presented to optimizers, plus DOT export.
//!
//! Section order is fixed: #Instruction, #Code, #Documentation, #Variables,
//! #Constraints, #Inputs, #Others, #Outputs, #Feedback. Value lines are
//! `<data_type> <name> = <value>`; code values render as a fenced block.
//! Identical graphs render byte-identical reports.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::{Direction, Graph, Node, NodeId, NodeSet};
use crate::value::Value;

/// Role of a node inside one report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Trainable parameter: listed under #Variables.
    Variable,
    /// Non-trainable root or boundary parent: listed under #Inputs.
    Input,
    /// Intermediate computed node: listed under #Others.
    Other,
    /// The single output node.
    Output,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ReportError {
    #[error("output node {0} is not in the subgraph")]
    OutputNotInSubgraph(NodeId),
    #[error("trainable node {0} cannot be the output")]
    ParamIsOutput(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

/// Assigns a role to every subgraph node: parameters are Variables, the
/// output is Output, nodes simultaneously ancestors of the output and
/// descendants of a parameter are Others, and everything else (roots and
/// boundary parents, even ones computed outside the subgraph) is an Input.
pub fn classify(
    graph: &Graph,
    subgraph: &NodeSet,
    params: &[NodeId],
    output: NodeId,
) -> Result<BTreeMap<NodeId, NodeRole>, ReportError> {
    if !subgraph.contains(output) {
        return Err(ReportError::OutputNotInSubgraph(output));
    }
    if params.contains(&output) {
        return Err(ReportError::ParamIsOutput(output));
    }
    let ancestors = graph
        .reachable_set(output, Direction::Ancestors)
        .map_err(|_| ReportError::UnknownNode(output))?;
    let mut intermediate: std::collections::BTreeSet<NodeId> = std::collections::BTreeSet::new();
    for &param in params {
        let descendants = graph
            .reachable_set(param, Direction::Descendants)
            .map_err(|_| ReportError::UnknownNode(param))?;
        intermediate.extend(descendants.intersection(&ancestors).copied());
    }
    let mut roles = BTreeMap::new();
    for id in subgraph.iter() {
        graph.node(id).map_err(|_| ReportError::UnknownNode(id))?;
        let role = if id == output {
            NodeRole::Output
        } else if params.contains(&id) {
            NodeRole::Variable
        } else if intermediate.contains(&id) {
            NodeRole::Other
        } else {
            NodeRole::Input
        };
        roles.insert(id, role);
    }
    Ok(roles)
}

/// The rendered pseudo-algorithm problem: one backward pass presented as
/// sectioned text.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemReport {
    pub instruction: String,
    /// "<child> = <op>(<parents>)" in increasing creation-index order.
    pub code_lines: Vec<String>,
    /// Operator name and description, in order of first use in the code.
    pub documentation: Vec<(String, String)>,
    pub variables: Vec<String>,
    pub constraints: Vec<String>,
    pub inputs: Vec<String>,
    pub others: Vec<String>,
    pub outputs: Vec<String>,
    pub feedback: String,
}

fn value_line(node: &Node) -> String {
    match &node.value {
        Value::Code(src) => format!("(code) {} = ```\n{}\n```", node.name, src),
        value => format!("{} {} = {}", value.type_token(), node.name, value.render_inline()),
    }
}

fn code_line(graph: &Graph, node: &Node) -> String {
    let operator = graph
        .operator(node.operator.expect("computed node has an operator"))
        .expect("operator id is valid");
    let args: Vec<&str> = node
        .parents
        .iter()
        .filter(|&&p| Some(p) != node.code_parent)
        .map(|&p| graph.node(p).expect("parent exists").name.as_str())
        .collect();
    format!("{} = {}({})", node.name, operator.name, args.join(", "))
}

/// Builds the structured report for a classified subgraph.
pub fn build_report(
    graph: &Graph,
    subgraph: &NodeSet,
    roles: &BTreeMap<NodeId, NodeRole>,
    instruction: &str,
    feedback: &str,
) -> ProblemReport {
    let mut report = ProblemReport {
        instruction: instruction.to_string(),
        code_lines: Vec::new(),
        documentation: Vec::new(),
        variables: Vec::new(),
        constraints: Vec::new(),
        inputs: Vec::new(),
        others: Vec::new(),
        outputs: Vec::new(),
        feedback: feedback.to_string(),
    };
    // NodeSet iterates in creation-index order, which fixes every section's
    // line order and keeps rendering deterministic.
    for id in subgraph.iter() {
        let node = graph.node(id).expect("subgraph node exists");
        match roles.get(&id) {
            Some(NodeRole::Variable) => {
                report.variables.push(value_line(node));
                if let Some(constraint) = &node.constraint {
                    report.constraints.push(format!("{}: {}", node.name, constraint));
                }
            }
            Some(NodeRole::Input) => report.inputs.push(value_line(node)),
            Some(NodeRole::Other) => {
                report.others.push(value_line(node));
                record_code_line(graph, node, &mut report);
            }
            Some(NodeRole::Output) => {
                report.outputs.push(value_line(node));
                if node.operator.is_some() {
                    record_code_line(graph, node, &mut report);
                }
            }
            None => {}
        }
    }
    report
}

fn record_code_line(graph: &Graph, node: &Node, report: &mut ProblemReport) {
    report.code_lines.push(code_line(graph, node));
    let operator = graph
        .operator(node.operator.expect("computed node"))
        .expect("operator id is valid");
    if !report.documentation.iter().any(|(name, _)| name == &operator.name) {
        report
            .documentation
            .push((operator.name.clone(), operator.description.clone()));
    }
}

impl ProblemReport {
    /// Renders the report text. Empty sections render the header followed
    /// by nothing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let docs: Vec<String> = self
            .documentation
            .iter()
            .map(|(name, description)| format!("[{name}] {description}"))
            .collect();
        let sections: [(&str, &[String]); 8] = [
            ("#Instruction", std::slice::from_ref(&self.instruction)),
            ("#Code", &self.code_lines),
            ("#Documentation", &docs),
            ("#Variables", &self.variables),
            ("#Constraints", &self.constraints),
            ("#Inputs", &self.inputs),
            ("#Others", &self.others),
            ("#Outputs", &self.outputs),
        ];
        for (header, lines) in sections {
            out.push_str(header);
            out.push('\n');
            for line in lines {
                out.push_str(line);
                out.push('\n');
            }
            out.push('\n');
        }
        out.push_str("#Feedback:\n");
        out.push_str(&self.feedback);
        out
    }
}

/// Classifies, builds and renders in one call.
pub fn render_report(
    graph: &Graph,
    subgraph: &NodeSet,
    params: &[NodeId],
    output: NodeId,
    instruction: &str,
    feedback: &str,
) -> Result<String, ReportError> {
    let roles = classify(graph, subgraph, params, output)?;
    Ok(build_report(graph, subgraph, &roles, instruction, feedback).render())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn dot_label(node: &Node) -> String {
    let mut preview = node.value.render_inline();
    if preview.chars().count() > 40 {
        preview = preview.chars().take(37).collect::<String>() + "...";
    }
    format!("{}\\n{}", dot_escape(&node.name), dot_escape(&preview))
}

/// Emits a DOT digraph of the full graph or of a subgraph. Trainable nodes
/// are filled, exception nodes get an error shape; output is deterministic
/// for a given graph.
pub fn export_dot(graph: &Graph, subgraph: Option<&NodeSet>) -> String {
    let include: Vec<&Node> = graph
        .nodes()
        .filter(|n| subgraph.is_none_or(|s| s.contains(n.id)))
        .collect();
    if include.is_empty() {
        return "digraph g { }\n".to_string();
    }
    let mut out = String::from("digraph g {\n");
    for node in &include {
        let style = if node.is_exception {
            ", shape=octagon, color=red"
        } else if node.trainable {
            ", shape=box, style=filled, fillcolor=lightgoldenrod1"
        } else {
            ", shape=box"
        };
        out.push_str(&format!(
            "  \"{}\" [label=\"{}\"{}];\n",
            dot_escape(&node.name),
            dot_label(node),
            style
        ));
    }
    for node in &include {
        for &parent in &node.parents {
            if subgraph.is_some_and(|s| !s.contains(parent)) {
                continue;
            }
            let parent_name = &graph.node(parent).expect("parent exists").name;
            out.push_str(&format!(
                "  \"{}\" -> \"{}\";\n",
                dot_escape(parent_name),
                dot_escape(&node.name)
            ));
        }
    }
    out.push_str("}\n");
    out
}
