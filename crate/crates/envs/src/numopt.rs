//! Synthetic numerical environment: a seeded recipe of sampled combination
//! steps builds a trace from the scalar input x to the output y, and the
//! task is to drive |y - y*| to zero.
//!
//! Each step combines the running value with either a previously created
//! node or a fresh constant in [-2, 2], under an operator drawn from
//! {add, sub, mul}. Division is excluded; neg is registered so unary chain
//! rules stay exercised elsewhere. Degenerate draws (vanishing dy/dx,
//! non-finite values, or a target already met) are re-sampled a bounded
//! number of times.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use opto_core::graph::{ApplyOptions, Graph, NodeId, NodeOptions};
use opto_core::{ops, Value};

pub const SUCCESS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum NumOp {
    Add,
    Sub,
    Mul,
}

impl NumOp {
    fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            NumOp::Add => a + b,
            NumOp::Sub => a - b,
            NumOp::Mul => a * b,
        }
    }

    /// d(op)/da and d(op)/db at the given operands.
    fn partials(self, a: f64, b: f64) -> (f64, f64) {
        match self {
            NumOp::Add => (1.0, 1.0),
            NumOp::Sub => (1.0, -1.0),
            NumOp::Mul => (b, a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Operand {
    /// Index into the slot list (x is slot 0; constants and intermediates
    /// follow in creation order).
    Existing(usize),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct BuildStep {
    op: NumOp,
    operand: Operand,
    running_first: bool,
}

/// A reproducible instance: the construction recipe plus the initial
/// parameter and the target output.
#[derive(Debug, Clone, PartialEq)]
pub struct NumOptInstance {
    pub seed: u64,
    pub x0: f64,
    pub target: f64,
    steps: Vec<BuildStep>,
}

pub struct NumOptGraph {
    pub graph: Graph,
    pub x: NodeId,
    pub y: NodeId,
}

impl NumOptGraph {
    pub fn output_value(&self) -> f64 {
        self.graph
            .node(self.y)
            .expect("y exists")
            .value
            .as_number()
            .expect("y is numeric")
    }
}

/// Samples an instance with `t` combination steps.
pub fn numopt_generate(seed: u64, t: usize) -> NumOptInstance {
    assert!(t >= 1, "at least one combination step");
    let mut rng = StdRng::seed_from_u64(seed);
    for _attempt in 0..200 {
        let x0: f64 = rng.random_range(-2.0..2.0);
        let mut slot_count = 1; // slot 0 is x
        let mut steps = Vec::with_capacity(t);
        for _ in 0..t {
            let operand = if rng.random_bool(0.5) {
                Operand::Existing(rng.random_range(0..slot_count))
            } else {
                Operand::Constant(rng.random_range(-2.0..2.0))
            };
            let op = match rng.random_range(0..3) {
                0 => NumOp::Add,
                1 => NumOp::Sub,
                _ => NumOp::Mul,
            };
            let running_first = rng.random_bool(0.5);
            if matches!(operand, Operand::Constant(_)) {
                slot_count += 1; // the constant becomes a node
            }
            slot_count += 1; // the combination result becomes a node
            steps.push(BuildStep { op, operand, running_first });
        }
        let instance = NumOptInstance {
            seed,
            x0,
            target: 0.0,
            steps,
        };
        let (y0, dy0) = instance.eval_dual(x0);
        if !y0.is_finite() || y0.abs() > 1e6 || dy0.abs() < 1e-3 {
            continue;
        }
        // Evaluate at a random feasible x, then perturb slightly.
        let x_feasible: f64 = rng.random_range(-2.0..2.0);
        let (y_feasible, _) = instance.eval_dual(x_feasible);
        if !y_feasible.is_finite() {
            continue;
        }
        let target = y_feasible + rng.random_range(-0.005..0.005);
        if (y0 - target).abs() < 0.05 {
            continue; // already at the target; nothing to optimize
        }
        return NumOptInstance { target, ..instance };
    }
    panic!("no non-degenerate instance after bounded retries (seed {seed})");
}

impl NumOptInstance {
    /// Replays the recipe arithmetically with dual numbers, returning
    /// (y, dy/dx) at the given x.
    pub fn eval_dual(&self, x: f64) -> (f64, f64) {
        let mut slots: Vec<(f64, f64)> = vec![(x, 1.0)];
        let mut running = (x, 1.0);
        for step in &self.steps {
            let operand = match step.operand {
                Operand::Existing(i) => slots[i],
                Operand::Constant(c) => {
                    slots.push((c, 0.0));
                    (c, 0.0)
                }
            };
            let (first, second) = if step.running_first {
                (running, operand)
            } else {
                (operand, running)
            };
            let value = step.op.eval(first.0, second.0);
            let (da, db) = step.op.partials(first.0, second.0);
            running = (value, da * first.1 + db * second.1);
            slots.push(running);
        }
        running
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        self.eval_dual(x).0
    }

    /// Builds the trace graph at the given parameter value. The parameter
    /// node is named "x" and the output node "y".
    pub fn build(&self, x_value: f64) -> NumOptGraph {
        let mut graph = Graph::new();
        let x = graph
            .create_node(Value::Number(x_value), NodeOptions::named("x").trainable())
            .expect("fresh graph");
        let add = graph.register_operator(ops::add()).expect("fresh registry");
        let sub = graph.register_operator(ops::sub()).expect("fresh registry");
        let mul = graph.register_operator(ops::mul()).expect("fresh registry");
        graph.register_operator(ops::neg()).expect("fresh registry");

        let mut slots: Vec<NodeId> = vec![x];
        let mut running = x;
        for (index, step) in self.steps.iter().enumerate() {
            let operand = match step.operand {
                Operand::Existing(i) => slots[i],
                Operand::Constant(c) => {
                    let node = graph
                        .create_node(Value::Number(c), NodeOptions::default())
                        .expect("finite constant");
                    slots.push(node);
                    node
                }
            };
            let inputs = if step.running_first {
                [running, operand]
            } else {
                [operand, running]
            };
            let op = match step.op {
                NumOp::Add => add,
                NumOp::Sub => sub,
                NumOp::Mul => mul,
            };
            let options = if index + 1 == self.steps.len() {
                ApplyOptions::named("y")
            } else {
                ApplyOptions::default()
            };
            running = graph
                .apply(op, &inputs, options)
                .expect("instance values stay finite near the sampled range");
            slots.push(running);
        }
        NumOptGraph { graph, x, y: running }
    }
}

/// The directional output feedback.
pub fn numopt_feedback(y: f64, target: f64) -> String {
    if (y - target).abs() <= SUCCESS_TOLERANCE {
        "Success.".to_string()
    } else if y < target {
        "The output should be larger.".to_string()
    } else {
        "The output should be smaller.".to_string()
    }
}
