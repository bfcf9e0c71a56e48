//! Shared graph builders for the core integration tests.
#![allow(dead_code)] // each test binary uses a different subset

use opto_core::graph::{ApplyOptions, Graph, NodeId, NodeOptions, OperatorId};
use opto_core::{ops, Value};

pub struct Fig4 {
    pub graph: Graph,
    pub x: NodeId,
    pub b: NodeId,
    pub a: NodeId,
    pub y: NodeId,
    pub z: NodeId,
}

/// The worked example graph: x = -1.0 (trainable), b = 1.0,
/// a = bar(x) with bar doing -2x, y = add(b, a), z = mul(a, y).
pub fn fig4(x_value: f64) -> Fig4 {
    let mut graph = Graph::new();
    let x = graph
        .create_node(Value::Number(x_value), NodeOptions::named("x").trainable())
        .unwrap();
    let b = graph
        .create_node(Value::Number(1.0), NodeOptions::named("b"))
        .unwrap();
    let bar = graph
        .register_operator(ops::scale(
            "bar",
            "This is a method that does negative scaling.",
            -2.0,
        ))
        .unwrap();
    let add = graph.register_operator(ops::add()).unwrap();
    let mul = graph.register_operator(ops::mul()).unwrap();
    let a = graph.apply(bar, &[x], ApplyOptions::named("a")).unwrap();
    let y = graph.apply(add, &[b, a], ApplyOptions::named("y")).unwrap();
    let z = graph.apply(mul, &[a, y], ApplyOptions::named("z")).unwrap();
    Fig4 { graph, x, b, a, y, z }
}

/// Diamond: x feeds a and b, which feed z.
pub fn diamond() -> (Graph, NodeId, NodeId, NodeId, NodeId) {
    let mut graph = Graph::new();
    let x = graph
        .create_node(Value::Number(2.0), NodeOptions::named("x").trainable())
        .unwrap();
    let neg = graph.register_operator(ops::neg()).unwrap();
    let bar2 = graph
        .register_operator(ops::scale("double", "Doubles the input.", 2.0))
        .unwrap();
    let add = graph.register_operator(ops::add()).unwrap();
    let a = graph.apply(neg, &[x], ApplyOptions::named("a")).unwrap();
    let b = graph.apply(bar2, &[x], ApplyOptions::named("b")).unwrap();
    let z = graph.apply(add, &[a, b], ApplyOptions::named("z")).unwrap();
    (graph, x, a, b, z)
}

pub fn register_arithmetic(graph: &mut Graph) -> (OperatorId, OperatorId, OperatorId, OperatorId) {
    let add = graph.register_operator(ops::add()).unwrap();
    let sub = graph.register_operator(ops::sub()).unwrap();
    let mul = graph.register_operator(ops::mul()).unwrap();
    let neg = graph.register_operator(ops::neg()).unwrap();
    (add, sub, mul, neg)
}
