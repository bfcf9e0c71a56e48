//! Seeded random-DAG generators backing the acceptance suite.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use opto_core::graph::{Arity, Graph, NodeId, NodeOptions, OperatorId, OperatorSpec};
use opto_core::{ops, Value};

/// A random DAG for structural minimal-subgraph checks: bounded degree,
/// 1..=4 trainable roots, output at the final node.
pub struct MspDag {
    pub graph: Graph,
    pub params: Vec<NodeId>,
    pub output: NodeId,
    /// Maximum total degree (parents plus children) over all nodes.
    pub max_degree: usize,
    pub n: usize,
}

pub fn random_msp_dag(seed: u64) -> MspDag {
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let n = rng.random_range(8..=60usize);
    let root_count = rng.random_range(3..=7usize).min(n - 1);
    let trainable_count = rng.random_range(1..=4usize).min(root_count);

    let mut graph = Graph::new();
    let join_ops: Vec<OperatorId> = (1..=3usize)
        .map(|arity| {
            graph
                .register_operator(OperatorSpec::new(
                    &format!("join{arity}"),
                    "Averages its inputs.",
                    Arity::Fixed(arity),
                    move |values: &[Value]| {
                        let sum: f64 = values.iter().filter_map(Value::as_number).sum();
                        Ok(Value::Number(sum / arity as f64))
                    },
                ))
                .expect("fresh registry")
        })
        .collect();

    let mut nodes: Vec<NodeId> = Vec::new();
    let mut degree: Vec<usize> = Vec::new();
    for i in 0..root_count {
        let mut options = NodeOptions::default();
        if i < trainable_count {
            options.trainable = true;
        }
        let id = graph
            .create_node(Value::Number(rng.random_range(-2.0..2.0)), options)
            .expect("fresh graph");
        nodes.push(id);
        degree.push(0);
    }

    // Degree is charged as each edge is chosen, so duplicate parents in
    // one child cannot push a node past the cap.
    let pick = |rng: &mut StdRng, nodes: &[NodeId], degree: &[usize]| -> NodeId {
        for _ in 0..16 {
            let candidate = nodes[rng.random_range(0..nodes.len())];
            if degree[candidate.index()] < 5 {
                return candidate;
            }
        }
        *nodes
            .iter()
            .rev()
            .find(|id| degree[id.index()] < 5)
            .expect("the newest node always has spare degree")
    };

    for _ in root_count..n {
        let arity = rng.random_range(1..=3usize);
        let mut parents = Vec::with_capacity(arity);
        // Bias toward the previous node so long paths exist.
        let first = if rng.random_bool(0.5) && degree[nodes.last().unwrap().index()] < 5 {
            *nodes.last().unwrap()
        } else {
            pick(&mut rng, &nodes, &degree)
        };
        degree[first.index()] += 1;
        parents.push(first);
        while parents.len() < arity {
            let parent = pick(&mut rng, &nodes, &degree);
            degree[parent.index()] += 1;
            parents.push(parent);
        }
        let child = graph
            .apply_operator(join_ops[parents.len() - 1], &parents)
            .expect("join of finite numbers is finite");
        degree.push(parents.len());
        nodes.push(child);
    }

    let params: Vec<NodeId> = nodes[..trainable_count].to_vec();
    let output = *nodes.last().unwrap();
    let max_degree = graph
        .node_ids()
        .map(|id| graph.node(id).unwrap().parents.len() + graph.children(id).unwrap().len())
        .max()
        .unwrap_or(0);
    MspDag {
        graph,
        params,
        output,
        max_degree,
        n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NumericOp {
    Add,
    Sub,
    Mul,
    Neg,
}

/// A reproducible numeric DAG over {add, sub, mul, neg} that can be rebuilt
/// at perturbed root values, for finite-difference checks.
pub struct NumericDag {
    root_values: Vec<f64>,
    trainable: Vec<bool>,
    steps: Vec<(NumericOp, Vec<usize>)>,
}

impl NumericDag {
    pub fn generate(seed: u64) -> NumericDag {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x2545_F491).wrapping_add(3));
        loop {
            let root_count = rng.random_range(2..=5usize);
            let trainable_count = rng.random_range(1..=3usize).min(root_count);
            let root_values: Vec<f64> =
                (0..root_count).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mut trainable = vec![false; root_count];
            for flag in trainable.iter_mut().take(trainable_count) {
                *flag = true;
            }
            let step_count = rng.random_range(4..=14usize);
            let mut steps = Vec::with_capacity(step_count);
            for index in 0..step_count {
                let slot_count = root_count + index;
                let op = match rng.random_range(0..4) {
                    0 => NumericOp::Add,
                    1 => NumericOp::Sub,
                    2 => NumericOp::Mul,
                    _ => NumericOp::Neg,
                };
                let first = if index == 0 {
                    0 // anchor the chain at root 0 so a parameter is always reached
                } else {
                    slot_count - 1
                };
                let parents = match op {
                    NumericOp::Neg => vec![first],
                    _ => vec![first, rng.random_range(0..slot_count)],
                };
                steps.push((op, parents));
            }
            let dag = NumericDag {
                root_values,
                trainable,
                steps,
            };
            let base = dag.eval(&BTreeMap::new());
            if base.is_finite() && base.abs() <= 1e4 {
                return dag;
            }
        }
    }

    pub fn trainable_roots(&self) -> Vec<usize> {
        self.trainable
            .iter()
            .enumerate()
            .filter(|(_, t)| **t)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn root_value(&self, slot: usize) -> f64 {
        self.root_values[slot]
    }

    /// Output value with some root values overridden (arithmetic replay;
    /// independent of the graph path).
    pub fn eval(&self, overrides: &BTreeMap<usize, f64>) -> f64 {
        let mut slots: Vec<f64> = self
            .root_values
            .iter()
            .enumerate()
            .map(|(i, v)| overrides.get(&i).copied().unwrap_or(*v))
            .collect();
        for (op, parents) in &self.steps {
            let value = match op {
                NumericOp::Add => slots[parents[0]] + slots[parents[1]],
                NumericOp::Sub => slots[parents[0]] - slots[parents[1]],
                NumericOp::Mul => slots[parents[0]] * slots[parents[1]],
                NumericOp::Neg => -slots[parents[0]],
            };
            slots.push(value);
        }
        *slots.last().unwrap()
    }

    /// Builds the trace graph, returning the root nodes and the output.
    pub fn build(&self, overrides: &BTreeMap<usize, f64>) -> (Graph, Vec<NodeId>, NodeId) {
        let mut graph = Graph::new();
        let add = graph.register_operator(ops::add()).unwrap();
        let sub = graph.register_operator(ops::sub()).unwrap();
        let mul = graph.register_operator(ops::mul()).unwrap();
        let neg = graph.register_operator(ops::neg()).unwrap();
        let mut slots: Vec<NodeId> = self
            .root_values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let value = overrides.get(&i).copied().unwrap_or(*v);
                let mut options = NodeOptions::named(&format!("p{i}"));
                options.trainable = self.trainable[i];
                graph
                    .create_node(Value::Number(value), options)
                    .expect("finite root")
            })
            .collect();
        for (op, parents) in &self.steps {
            let inputs: Vec<NodeId> = parents.iter().map(|&i| slots[i]).collect();
            let op_id = match op {
                NumericOp::Add => add,
                NumericOp::Sub => sub,
                NumericOp::Mul => mul,
                NumericOp::Neg => neg,
            };
            let node = graph
                .apply_operator(op_id, &inputs)
                .expect("bounded values stay finite");
            slots.push(node);
        }
        let roots = slots[..self.root_values.len()].to_vec();
        let output = *slots.last().unwrap();
        (graph, roots, output)
    }
}
