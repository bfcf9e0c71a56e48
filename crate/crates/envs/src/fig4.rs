//! The worked single-parameter example: z = bar(x) * (bar(x) + 1) with
//! bar doing negative scaling by -2, driven toward larger outputs.

use opto_core::graph::{ApplyOptions, Graph, NodeId, NodeOptions};
use opto_core::{ops, Value};

pub const FIG4_FEEDBACK: &str = "Output should be larger.";

pub struct Fig4Instance {
    pub graph: Graph,
    pub x: NodeId,
    pub z: NodeId,
}

/// Builds the trace for the current parameter value: x (trainable),
/// b = 1.0, a = bar(x), y = add(b, a), z = mul(a, y).
pub fn fig4_build(x_value: f64) -> Fig4Instance {
    let mut graph = Graph::new();
    let x = graph
        .create_node(Value::Number(x_value), NodeOptions::named("x").trainable())
        .expect("fresh graph");
    let b = graph
        .create_node(Value::Number(1.0), NodeOptions::named("b"))
        .expect("fresh graph");
    let bar = graph
        .register_operator(ops::scale(
            "bar",
            "This is a method that does negative scaling.",
            -2.0,
        ))
        .expect("fresh registry");
    let add = graph.register_operator(ops::add()).expect("fresh registry");
    let mul = graph.register_operator(ops::mul()).expect("fresh registry");
    let a = graph.apply(bar, &[x], ApplyOptions::named("a")).expect("finite");
    let y = graph.apply(add, &[b, a], ApplyOptions::named("y")).expect("finite");
    let z = graph.apply(mul, &[a, y], ApplyOptions::named("z")).expect("finite");
    Fig4Instance { graph, x, z }
}

impl Fig4Instance {
    pub fn output_value(&self) -> f64 {
        self.graph
            .node(self.z)
            .expect("z exists")
            .value
            .as_number()
            .expect("z is numeric")
    }
}
