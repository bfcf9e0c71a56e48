//! Graph construction, feedback stores and reachability.

mod common;

use opto_core::exprlang;
use opto_core::graph::{
    ApplyOptions, Arity, Direction, FeedbackMessage, Graph, GraphError, NodeOptions, OperatorSpec,
};
use opto_core::{ops, Value};

#[test]
fn create_trainable_root() {
    let mut g = Graph::new();
    let x = g
        .create_node(Value::Number(-1.0), NodeOptions::named("x").trainable())
        .unwrap();
    let node = g.node(x).unwrap();
    assert_eq!(node.name, "x");
    assert_eq!(node.value, Value::Number(-1.0));
    assert!(node.trainable);
    assert!(node.is_root());
}

#[test]
fn non_trainable_root() {
    let mut g = Graph::new();
    let b = g
        .create_node(Value::Number(1.0), NodeOptions::named("b"))
        .unwrap();
    assert!(!g.node(b).unwrap().trainable);
}

#[test]
fn duplicate_node_name_rejected() {
    let mut g = Graph::new();
    g.create_node(Value::Text(String::new()), NodeOptions::named("x"))
        .unwrap();
    let err = g
        .create_node(Value::Text(String::new()), NodeOptions::named("x"))
        .unwrap_err();
    assert_eq!(err, GraphError::DuplicateName("x".to_string()));
}

#[test]
fn auto_names_use_kind_and_index() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(0.0), NodeOptions::default()).unwrap();
    let b = g.create_node(Value::Text("hi".into()), NodeOptions::default()).unwrap();
    assert_eq!(g.node(a).unwrap().name, "float0");
    assert_eq!(g.node(b).unwrap().name, "str1");
}

#[test]
fn invalid_identifiers_rejected() {
    let mut g = Graph::new();
    let err = g
        .create_node(Value::Number(0.0), NodeOptions::named("3bad"))
        .unwrap_err();
    assert_eq!(err, GraphError::InvalidIdentifier("3bad".to_string()));
    let err = g
        .register_operator(OperatorSpec::new("3bad", "", Arity::Fixed(1), |_| {
            Ok(Value::Number(0.0))
        }))
        .unwrap_err();
    assert_eq!(err, GraphError::InvalidIdentifier("3bad".to_string()));
}

#[test]
fn operators_share_one_namespace() {
    let mut g = Graph::new();
    g.register_operator(ops::mul()).unwrap();
    let err = g.register_operator(ops::mul()).unwrap_err();
    assert_eq!(err, GraphError::DuplicateName("mul".to_string()));
}

#[test]
fn graph_is_send_and_sync_for_shared_readers() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Graph>();
}

#[test]
fn code_values_must_parse_at_store_time() {
    let mut g = Graph::new();
    let err = g
        .create_node(Value::Code("fn f(x) { x + }".into()), NodeOptions::named("p"))
        .unwrap_err();
    assert!(matches!(err, GraphError::InvalidCode(_)));
    assert!(g
        .create_node(Value::Code("fn f(x) { x }".into()), NodeOptions::named("p"))
        .is_ok());
}

#[test]
fn apply_mul_names_child() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(2.0), NodeOptions::named("a")).unwrap();
    let y = g.create_node(Value::Number(3.0), NodeOptions::named("y")).unwrap();
    let mul = g.register_operator(ops::mul()).unwrap();
    let z = g.apply(mul, &[a, y], ApplyOptions::named("z")).unwrap();
    let node = g.node(z).unwrap();
    assert_eq!(node.name, "z");
    assert_eq!(node.value, Value::Number(6.0));
    assert_eq!(node.parents, vec![a, y]);
}

#[test]
fn identity_operator_copies_value() {
    let mut g = Graph::new();
    let x = g
        .create_node(Value::Text("payload".into()), NodeOptions::named("x"))
        .unwrap();
    let identity = g
        .register_operator(OperatorSpec::new(
            "identity",
            "Returns its input unchanged.",
            Arity::Fixed(1),
            |values| Ok(values[0].clone()),
        ))
        .unwrap();
    let out = g.apply_operator(identity, &[x]).unwrap();
    assert_eq!(g.node(out).unwrap().value, g.node(x).unwrap().value);
}

#[test]
fn operator_determinism() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(1.5), NodeOptions::default()).unwrap();
    let b = g.create_node(Value::Number(1.5), NodeOptions::default()).unwrap();
    let c = g.create_node(Value::Number(2.5), NodeOptions::default()).unwrap();
    let mul = g.register_operator(ops::mul()).unwrap();
    let first = g.apply_operator(mul, &[a, c]).unwrap();
    let second = g.apply_operator(mul, &[b, c]).unwrap();
    assert_eq!(g.node(first).unwrap().value, g.node(second).unwrap().value);
}

#[test]
fn arity_mismatch() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(1.0), NodeOptions::default()).unwrap();
    let mul = g.register_operator(ops::mul()).unwrap();
    let err = g.apply_operator(mul, &[a]).unwrap_err();
    assert!(matches!(err, GraphError::ArityMismatch { .. }));
}

#[test]
fn code_parameter_out_of_bounds_index_becomes_exception_node() {
    let mut g = Graph::new();
    let xs = g
        .create_node(
            Value::List(vec![
                Value::Number(1.0),
                Value::Number(2.0),
                Value::Number(3.0),
            ]),
            NodeOptions::named("xs"),
        )
        .unwrap();
    let code = g
        .create_node(
            Value::Code("fn pick(xs) { xs[5] }".into()),
            NodeOptions::named("pick_code").trainable(),
        )
        .unwrap();
    let pick = g
        .register_operator(OperatorSpec::new(
            "pick",
            "Selects one element from a list.",
            Arity::Fixed(1),
            |_| unreachable!("replaced by the code parameter"),
        ))
        .unwrap();
    let err = g
        .apply(pick, &[xs], ApplyOptions::default().with_code_param(code))
        .unwrap_err();
    let GraphError::ExecutionTrapped { node, message } = err else {
        panic!("expected ExecutionTrapped, got {err:?}");
    };
    assert_eq!(message, "index out of bounds: index 5, list length 3");
    let exc = g.node(node).unwrap();
    assert!(exc.is_exception);
    assert_eq!(exc.value, Value::Text(message));
    // The failing inputs and the code parameter are its parents.
    assert_eq!(exc.parents, vec![xs, code]);
    assert_eq!(exc.code_parent, Some(code));
    assert_eq!(g.active_exception(), Some(node));
    g.validate().unwrap();
}

#[test]
fn exception_truncates_the_trace() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(1e300), NodeOptions::named("a")).unwrap();
    let mul = g.register_operator(ops::mul()).unwrap();
    let err = g.apply_operator(mul, &[a, a]).unwrap_err();
    let GraphError::ExecutionTrapped { node, .. } = err else {
        panic!("overflow should trap");
    };
    // No descendants may be built on the exception node, nor any new
    // applications until the epoch is cleared.
    let err = g.apply_operator(mul, &[a, a]).unwrap_err();
    assert!(matches!(err, GraphError::ExceptionActive(_)));
    g.zero_feedback(&[node]);
    assert!(g.apply_operator(mul, &[a, a]).is_err()); // still overflows, new exception
}

#[test]
fn nan_inf_results_are_trapped() {
    let mut g = Graph::new();
    let a = g.create_node(Value::Number(1e308), NodeOptions::default()).unwrap();
    let b = g.create_node(Value::Number(10.0), NodeOptions::default()).unwrap();
    let mul = g.register_operator(ops::mul()).unwrap();
    match g.apply_operator(mul, &[a, b]) {
        Err(GraphError::ExecutionTrapped { message, .. }) => {
            assert!(message.contains("non-finite"), "{message}");
        }
        other => panic!("expected trap, got {other:?}"),
    }
}

#[test]
fn feedback_append_order() {
    let mut g = Graph::new();
    let z = g.create_node(Value::Number(0.0), NodeOptions::named("z")).unwrap();
    g.add_feedback(z, "User", FeedbackMessage::Text("Output should be larger.".into()))
        .unwrap();
    assert_eq!(g.node(z).unwrap().feedback["User"].len(), 1);
    g.add_feedback(z, "User", FeedbackMessage::Text("second".into()))
        .unwrap();
    let messages = &g.node(z).unwrap().feedback["User"];
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0], FeedbackMessage::Text("Output should be larger.".into()));
    assert_eq!(messages[1], FeedbackMessage::Text("second".into()));
}

#[test]
fn add_feedback_unknown_node() {
    let mut g = Graph::new();
    let z = g.create_node(Value::Number(0.0), NodeOptions::default()).unwrap();
    drop(g);
    let mut other = Graph::new();
    let err = other
        .add_feedback(z, "User", FeedbackMessage::Text("x".into()))
        .unwrap_err();
    assert!(matches!(err, GraphError::UnknownNode(_)));
}

#[test]
fn zero_feedback_on_empty_list_is_noop() {
    let mut g = Graph::new();
    g.create_node(Value::Number(0.0), NodeOptions::default()).unwrap();
    g.zero_feedback(&[]);
}

#[test]
fn reachable_sets_match_fig4() {
    let f = common::fig4(-1.0);
    let ancestors = f.graph.reachable_set(f.z, Direction::Ancestors).unwrap();
    let expected: std::collections::BTreeSet<_> = [f.a, f.y, f.x, f.b].into_iter().collect();
    assert_eq!(ancestors, expected);
    assert!(f.graph.reachable_set(f.x, Direction::Ancestors).unwrap().is_empty());
    assert!(f.graph.reachable_set(f.z, Direction::Descendants).unwrap().is_empty());
}

#[test]
fn acyclicity_and_name_bijection_hold_after_construction() {
    let f = common::fig4(-1.0);
    f.graph.validate().unwrap();
    for node in f.graph.nodes() {
        for parent in &node.parents {
            assert!(parent.index() < node.id.index());
        }
    }
}

#[test]
fn code_application_interprets_the_program() {
    let mut g = Graph::new();
    let map = g
        .create_node(Value::List(vec![Value::Number(5.0), Value::Number(7.0)]), NodeOptions::named("map"))
        .unwrap();
    let plan = g.create_node(Value::Number(1.0), NodeOptions::named("plan")).unwrap();
    let code = g
        .create_node(
            Value::Code("fn act(map, plan) { map[plan] }".into()),
            NodeOptions::named("act_code").trainable(),
        )
        .unwrap();
    let act = g
        .register_operator(OperatorSpec::new(
            "act",
            "Given a map and plan, select a target coordinate.",
            Arity::Fixed(2),
            |_| unreachable!(),
        ))
        .unwrap();
    let out = g
        .apply(act, &[map, plan], ApplyOptions::named("target").with_code_param(code))
        .unwrap();
    assert_eq!(g.node(out).unwrap().value, Value::Number(7.0));
    assert_eq!(g.node(out).unwrap().parents, vec![map, plan, code]);
}

#[test]
fn set_value_revalidates_code() {
    let mut g = Graph::new();
    let p = g
        .create_node(Value::Code("fn f(x) { x }".into()), NodeOptions::named("p").trainable())
        .unwrap();
    assert!(matches!(
        g.set_value(p, Value::Code("fn f(x) {".into())),
        Err(GraphError::InvalidCode(_))
    ));
    g.set_value(p, Value::Code("fn f(x) { x + 1 }".into())).unwrap();
    let stored = g.node(p).unwrap().value.as_code().unwrap().to_string();
    let program = exprlang::parse(&stored).unwrap();
    assert_eq!(program.name, "f");
}
