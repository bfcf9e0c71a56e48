//! Big-step interpreter with a hard step limit.

use std::collections::BTreeMap;

use thiserror::Error;

use super::ast::{BinaryOp, Block, Expr, ExprKind, Program, Span, UnaryOp};
use crate::value::Value;

/// Default number of AST-node evaluations before the interpreter aborts.
pub const DEFAULT_STEP_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalErrorKind {
    DivideByZero,
    IndexOutOfBounds,
    TypeMismatch,
    UnboundVariable,
    StepLimitExceeded,
}

/// A deterministic runtime error: identical programs and arguments produce
/// byte-identical messages.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{message}")]
pub struct EvalError {
    pub kind: EvalErrorKind,
    pub message: String,
    pub span: Span,
}

impl EvalError {
    fn new(kind: EvalErrorKind, span: Span, message: impl Into<String>) -> Self {
        EvalError {
            kind,
            message: message.into(),
            span,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("signature mismatch: {detail}")]
pub struct SignatureMismatch {
    pub detail: String,
}

/// Checks that a program's name and parameter list match exactly
/// (order-sensitive).
pub fn check_signature(
    program: &Program,
    expected_name: &str,
    expected_params: &[&str],
) -> Result<(), SignatureMismatch> {
    if program.name != expected_name {
        return Err(SignatureMismatch {
            detail: format!(
                "function name '{}' does not match expected '{}'",
                program.name, expected_name
            ),
        });
    }
    if program.params.len() != expected_params.len()
        || program.params.iter().zip(expected_params).any(|(a, b)| a != b)
    {
        return Err(SignatureMismatch {
            detail: format!(
                "parameters ({}) do not match expected ({})",
                program.params.join(", "),
                expected_params.join(", ")
            ),
        });
    }
    Ok(())
}

struct Interp {
    scope: Vec<(String, Value)>,
    steps: u64,
    limit: u64,
}

/// Evaluates `program` on `args`. Integer arguments are widened to numbers
/// so the language sees a single numeric tower.
pub fn evaluate(program: &Program, args: &[Value], step_limit: u64) -> Result<Value, EvalError> {
    let entry = Span::new(1, 1);
    if args.len() != program.params.len() {
        return Err(EvalError::new(
            EvalErrorKind::TypeMismatch,
            entry,
            format!(
                "function '{}' expects {} argument(s), got {}",
                program.name,
                program.params.len(),
                args.len()
            ),
        ));
    }
    let mut interp = Interp {
        scope: program
            .params
            .iter()
            .cloned()
            .zip(args.iter().map(widen))
            .collect(),
        steps: 0,
        limit: step_limit,
    };
    interp.block(&program.body)
}

fn widen(v: &Value) -> Value {
    match v {
        Value::Integer(i) => Value::Number(*i as f64),
        Value::List(items) => Value::List(items.iter().map(widen).collect()),
        Value::Map(entries) => Value::Map(
            entries
                .iter()
                .map(|(k, v)| (k.clone(), widen(v)))
                .collect::<BTreeMap<_, _>>(),
        ),
        other => other.clone(),
    }
}

impl Interp {
    fn block(&mut self, block: &Block) -> Result<Value, EvalError> {
        let depth = self.scope.len();
        for (name, expr) in &block.bindings {
            let value = self.expr(expr)?;
            self.scope.push((name.clone(), value));
        }
        let result = self.expr(&block.value);
        self.scope.truncate(depth);
        result
    }

    fn expr(&mut self, e: &Expr) -> Result<Value, EvalError> {
        self.steps += 1;
        if self.steps > self.limit {
            return Err(EvalError::new(
                EvalErrorKind::StepLimitExceeded,
                e.span,
                format!("step limit exceeded after {} steps", self.limit),
            ));
        }
        match &e.kind {
            ExprKind::Number(n) => Ok(Value::Number(*n)),
            ExprKind::Boolean(b) => Ok(Value::Boolean(*b)),
            ExprKind::Text(s) => Ok(Value::Text(s.clone())),
            ExprKind::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    out.push(self.expr(item)?);
                }
                Ok(Value::List(out))
            }
            ExprKind::Var(name) => self
                .scope
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| {
                    EvalError::new(
                        EvalErrorKind::UnboundVariable,
                        e.span,
                        format!("unbound variable '{name}'"),
                    )
                }),
            ExprKind::Unary(UnaryOp::Neg, inner) => {
                let v = self.expr(inner)?;
                match v {
                    Value::Number(n) => Ok(Value::Number(-n)),
                    other => Err(type_mismatch(e.span, "'-'", "a number", &other)),
                }
            }
            ExprKind::Unary(UnaryOp::Not, inner) => {
                let v = self.expr(inner)?;
                match v {
                    Value::Boolean(b) => Ok(Value::Boolean(!b)),
                    other => Err(type_mismatch(e.span, "'not'", "a boolean", &other)),
                }
            }
            ExprKind::Binary(op, lhs, rhs) => self.binary(e.span, *op, lhs, rhs),
            ExprKind::Index(base, index) => {
                let base = self.expr(base)?;
                let index = self.expr(index)?;
                let items = match base {
                    Value::List(items) => items,
                    other => Err(type_mismatch(e.span, "indexing", "a list", &other))?,
                };
                let idx = match index {
                    Value::Number(n) if n.fract() == 0.0 => n as i64,
                    Value::Number(n) => {
                        return Err(EvalError::new(
                            EvalErrorKind::TypeMismatch,
                            e.span,
                            format!("list index must be an integer, got {n:?}"),
                        ));
                    }
                    other => Err(type_mismatch(e.span, "list index", "a number", &other))?,
                };
                if idx < 0 || idx as usize >= items.len() {
                    return Err(EvalError::new(
                        EvalErrorKind::IndexOutOfBounds,
                        e.span,
                        format!("index out of bounds: index {idx}, list length {}", items.len()),
                    ));
                }
                Ok(items[idx as usize].clone())
            }
            ExprKind::Len(inner) => {
                let v = self.expr(inner)?;
                match v {
                    Value::List(items) => Ok(Value::Number(items.len() as f64)),
                    other => Err(type_mismatch(e.span, "'len'", "a list", &other)),
                }
            }
            ExprKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let c = self.expr(cond)?;
                match c {
                    Value::Boolean(true) => self.block(then_branch),
                    Value::Boolean(false) => self.block(else_branch),
                    other => Err(type_mismatch(e.span, "'if' condition", "a boolean", &other)),
                }
            }
        }
    }

    fn binary(
        &mut self,
        span: Span,
        op: BinaryOp,
        lhs: &Expr,
        rhs: &Expr,
    ) -> Result<Value, EvalError> {
        // Short-circuit logic first.
        if matches!(op, BinaryOp::And | BinaryOp::Or) {
            let l = self.expr(lhs)?;
            let l = match l {
                Value::Boolean(b) => b,
                other => return Err(type_mismatch(span, op.symbol(), "booleans", &other)),
            };
            if op == BinaryOp::And && !l {
                return Ok(Value::Boolean(false));
            }
            if op == BinaryOp::Or && l {
                return Ok(Value::Boolean(true));
            }
            let r = self.expr(rhs)?;
            return match r {
                Value::Boolean(b) => Ok(Value::Boolean(b)),
                other => Err(type_mismatch(span, op.symbol(), "booleans", &other)),
            };
        }

        let l = self.expr(lhs)?;
        let r = self.expr(rhs)?;
        match op {
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => {
                let (a, b) = match (&l, &r) {
                    (Value::Number(a), Value::Number(b)) => (*a, *b),
                    _ => {
                        return Err(EvalError::new(
                            EvalErrorKind::TypeMismatch,
                            span,
                            format!(
                                "type mismatch: '{}' expects numbers, got {} and {}",
                                op.symbol(),
                                l.kind(),
                                r.kind()
                            ),
                        ));
                    }
                };
                let result = match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::DivideByZero,
                                span,
                                "division by zero",
                            ));
                        }
                        a / b
                    }
                    BinaryOp::Rem => {
                        if a.fract() != 0.0 || b.fract() != 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::TypeMismatch,
                                span,
                                "'%' requires integer operands",
                            ));
                        }
                        if b == 0.0 {
                            return Err(EvalError::new(
                                EvalErrorKind::DivideByZero,
                                span,
                                "remainder by zero",
                            ));
                        }
                        ((a as i64) % (b as i64)) as f64
                    }
                    _ => unreachable!(),
                };
                if !result.is_finite() {
                    return Err(EvalError::new(
                        EvalErrorKind::TypeMismatch,
                        span,
                        format!("non-finite result from '{}'", op.symbol()),
                    ));
                }
                Ok(Value::Number(result))
            }
            BinaryOp::Eq | BinaryOp::Ne => {
                let eq = values_equal(span, &l, &r)?;
                Ok(Value::Boolean(if op == BinaryOp::Eq { eq } else { !eq }))
            }
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
                let (a, b) = match (&l, &r) {
                    (Value::Number(a), Value::Number(b)) => (*a, *b),
                    _ => {
                        return Err(EvalError::new(
                            EvalErrorKind::TypeMismatch,
                            span,
                            format!(
                                "type mismatch: '{}' expects numbers, got {} and {}",
                                op.symbol(),
                                l.kind(),
                                r.kind()
                            ),
                        ));
                    }
                };
                let result = match op {
                    BinaryOp::Lt => a < b,
                    BinaryOp::Le => a <= b,
                    BinaryOp::Gt => a > b,
                    BinaryOp::Ge => a >= b,
                    _ => unreachable!(),
                };
                Ok(Value::Boolean(result))
            }
            BinaryOp::And | BinaryOp::Or => unreachable!(),
        }
    }
}

fn values_equal(span: Span, l: &Value, r: &Value) -> Result<bool, EvalError> {
    match (l, r) {
        (Value::Number(a), Value::Number(b)) => Ok(a == b),
        (Value::Boolean(a), Value::Boolean(b)) => Ok(a == b),
        (Value::Text(a), Value::Text(b)) => Ok(a == b),
        (Value::List(a), Value::List(b)) => {
            if a.len() != b.len() {
                return Ok(false);
            }
            for (x, y) in a.iter().zip(b) {
                if !values_equal(span, x, y)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        _ => Err(EvalError::new(
            EvalErrorKind::TypeMismatch,
            span,
            format!(
                "type mismatch: cannot compare {} with {}",
                l.kind(),
                r.kind()
            ),
        )),
    }
}

fn type_mismatch(span: Span, what: &str, expected: &str, got: &Value) -> EvalError {
    EvalError::new(
        EvalErrorKind::TypeMismatch,
        span,
        format!("type mismatch: {what} expects {expected}, got {}", got.kind()),
    )
}
