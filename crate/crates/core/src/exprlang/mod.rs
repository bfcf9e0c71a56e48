//! A minimal expression language so that code-valued trainable parameters
//! are executable and rewritable by optimizers.
//!
//! The language is deliberately small: literals, arithmetic, comparisons,
//! boolean logic, list indexing, `len`, `let` bindings and `if`/`else`
//! expressions. There are no loops and no recursion, so evaluation always
//! terminates; a step limit additionally guards list-heavy bodies. Programs
//! look like
//!
//! ```text
//! fn act(map, plan) { if plan > 3.0 { [0.0, 1.0] } else { plan } }
//! ```
//!
//! The grammar is documented in EBNF in `docs/exprlang.md`.

mod ast;
mod eval;
mod parser;

pub use ast::{BinaryOp, Block, Expr, ExprKind, Program, Span, UnaryOp};
pub use eval::{
    check_signature, evaluate, EvalError, EvalErrorKind, SignatureMismatch, DEFAULT_STEP_LIMIT,
};
pub use parser::{parse, SyntaxError};
