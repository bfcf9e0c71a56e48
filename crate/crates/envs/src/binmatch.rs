//! The k-digit binary-match construction: a chain of digit checks in a
//! hidden order, stopping at the first failure. The minimal subgraph of a
//! failure reaches exactly the bits examined so far, which is what makes
//! the trace-aware proposer solve the task in at most k steps.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use opto_core::graph::{ApplyOptions, Arity, Graph, NodeId, NodeOptions, OperatorSpec};
use opto_core::Value;

use crate::EnvError;

#[derive(Debug, Clone, PartialEq)]
pub struct BinMatchInstance {
    pub k: usize,
    pub reference: Vec<bool>,
    /// Which bit each check examines; a permutation of 0..k.
    pub check_order: Vec<usize>,
    pub seed: u64,
}

/// Samples a hidden reference and check order.
pub fn binmatch_generate(k: usize, seed: u64) -> BinMatchInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    let reference: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
    let mut check_order: Vec<usize> = (0..k).collect();
    check_order.shuffle(&mut rng);
    BinMatchInstance {
        k,
        reference,
        check_order,
        seed,
    }
}

impl BinMatchInstance {
    /// A random starting parameter drawn independently of the reference.
    pub fn random_bits(&self, seed: u64) -> Vec<bool> {
        let mut rng = StdRng::seed_from_u64(seed ^ 0x5bd1_e995);
        (0..self.k).map(|_| rng.random_bool(0.5)).collect()
    }
}

#[derive(Debug)]
pub struct BinMatchEval {
    pub graph: Graph,
    /// Trainable bit nodes, named bit0..bit{k-1}, indexed by bit position.
    pub bits: Vec<NodeId>,
    pub output: NodeId,
    pub feedback: String,
    pub succeeded: bool,
    /// 1-based position of the failing check, if any.
    pub failed_check: Option<usize>,
}

/// English ordinal: 1st, 2nd, 3rd, 4th, ... 11th, 12th, 13th, 21st, ...
pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Builds the check-chain trace for a candidate parameter. Construction
/// stops at the first failing check, so the graph ends at the failure.
pub fn binmatch_evaluate(
    instance: &BinMatchInstance,
    param: &[bool],
) -> Result<BinMatchEval, EnvError> {
    if param.len() != instance.k {
        return Err(EnvError::LengthMismatch {
            expected: instance.k,
            got: param.len(),
        });
    }
    let mut graph = Graph::new();
    let bits: Vec<NodeId> = (0..instance.k)
        .map(|i| {
            graph
                .create_node(
                    Value::Boolean(param[i]),
                    NodeOptions::named(&format!("bit{i}")).trainable(),
                )
                .expect("fresh graph")
        })
        .collect();

    let mut previous: Option<NodeId> = None;
    for (position, &bit_index) in instance.check_order.iter().enumerate() {
        let check_number = position + 1;
        let expected = instance.reference[bit_index];
        let op = graph
            .register_operator(OperatorSpec::new(
                &format!("check{check_number}"),
                "Checks one digit of the candidate against the hidden reference number.",
                if previous.is_some() { Arity::Fixed(2) } else { Arity::Fixed(1) },
                move |values| {
                    let bit = values
                        .last()
                        .and_then(Value::as_bool)
                        .ok_or_else(|| "check expects a boolean digit".to_string())?;
                    Ok(Value::Boolean(bit == expected))
                },
            ))
            .expect("fresh registry");
        let inputs: Vec<NodeId> = match previous {
            Some(prev) => vec![prev, bits[bit_index]],
            None => vec![bits[bit_index]],
        };
        let node = graph
            .apply(op, &inputs, ApplyOptions::named(&format!("c{check_number}")))
            .expect("checks never trap");
        let passed = graph
            .node(node)
            .expect("check node exists")
            .value
            .as_bool()
            .expect("checks are boolean");
        if !passed {
            return Ok(BinMatchEval {
                graph,
                bits,
                output: node,
                feedback: format!("{} check failed", ordinal(check_number)),
                succeeded: false,
                failed_check: Some(check_number),
            });
        }
        previous = Some(node);
    }
    Ok(BinMatchEval {
        graph,
        bits,
        output: previous.expect("k >= 1 builds at least one check"),
        feedback: "All checks succeeded".to_string(),
        succeeded: true,
        failed_check: None,
    })
}
