//! Shared builders for the optimizer tests.
#![allow(dead_code)] // each test binary uses a different subset

use opto_core::graph::{ApplyOptions, Graph, NodeId, NodeOptions};
use opto_core::{ops, Value};

pub struct Fig4 {
    pub graph: Graph,
    pub x: NodeId,
    pub z: NodeId,
}

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
    Fig4 { graph, x, z }
}

pub fn z_value(graph: &Graph, z: NodeId) -> f64 {
    graph.node(z).unwrap().value.as_number().unwrap()
}
