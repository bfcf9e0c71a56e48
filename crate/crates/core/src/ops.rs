//! Stock numeric operator specifications with derivative rules.

use std::sync::Arc;

use crate::graph::{Arity, DerivFn, OperatorSpec};
use crate::value::Value;

fn number(value: &Value, op: &str) -> Result<f64, String> {
    value
        .as_number()
        .ok_or_else(|| format!("operator '{op}' expects numbers, got {}", value.kind()))
}

fn binary(
    name: &'static str,
    description: &str,
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> OperatorSpec {
    OperatorSpec::new(name, description, Arity::Fixed(2), move |values| {
        let a = number(&values[0], name)?;
        let b = number(&values[1], name)?;
        Ok(Value::Number(f(a, b)))
    })
}

pub fn add() -> OperatorSpec {
    binary("add", "This is an add operator.", |a, b| a + b).with_derivatives(vec![
        constant_rule(1.0),
        constant_rule(1.0),
    ])
}

pub fn sub() -> OperatorSpec {
    binary("sub", "This is a subtract operator.", |a, b| a - b).with_derivatives(vec![
        constant_rule(1.0),
        constant_rule(-1.0),
    ])
}

pub fn mul() -> OperatorSpec {
    let d_first: DerivFn = Arc::new(|values: &[Value]| number(&values[1], "mul"));
    let d_second: DerivFn = Arc::new(|values: &[Value]| number(&values[0], "mul"));
    binary("mul", "This is a multiply operator.", |a, b| a * b)
        .with_derivatives(vec![d_first, d_second])
}

pub fn neg() -> OperatorSpec {
    OperatorSpec::new(
        "neg",
        "This is a negation operator.",
        Arity::Fixed(1),
        |values| Ok(Value::Number(-number(&values[0], "neg")?)),
    )
    .with_derivatives(vec![constant_rule(-1.0)])
}

/// A unary scaling operator `x -> factor * x`.
pub fn scale(name: &'static str, description: &str, factor: f64) -> OperatorSpec {
    OperatorSpec::new(name, description, Arity::Fixed(1), move |values| {
        Ok(Value::Number(factor * number(&values[0], name)?))
    })
    .with_derivatives(vec![constant_rule(factor)])
}

fn constant_rule(c: f64) -> DerivFn {
    Arc::new(move |_: &[Value]| Ok(c))
}
