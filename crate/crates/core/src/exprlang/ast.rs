//! AST for the bundled expression language, plus the canonical printer.

use std::fmt;

use crate::value::format_float;

/// Source position (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A parsed function: `fn name(params) { body }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub name: String,
    pub params: Vec<String>,
    pub body: Block,
}

/// A braced block: zero or more `let` bindings followed by the block value.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub bindings: Vec<(String, Expr)>,
    pub value: Box<Expr>,
}

/// An expression with its source span. Equality ignores spans so that
/// printing and re-parsing yields an equal AST.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Number(f64),
    Boolean(bool),
    Text(String),
    List(Vec<Expr>),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Len(Box<Expr>),
    If {
        cond: Box<Expr>,
        then_branch: Block,
        else_branch: Block,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "and",
            BinaryOp::Or => "or",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
        }
    }
}

const PREC_NOT: u8 = 3;
const PREC_UNARY: u8 = 7;
const PREC_POSTFIX: u8 = 8;
const PREC_ATOM: u8 = 9;

fn expr_precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Binary(op, _, _) => op.precedence(),
        ExprKind::Unary(UnaryOp::Not, _) => PREC_NOT,
        ExprKind::Unary(UnaryOp::Neg, _) => PREC_UNARY,
        // A negative literal prints with a leading '-', so it binds like a
        // unary expression, not like an atom.
        ExprKind::Number(n) if *n < 0.0 => PREC_UNARY,
        ExprKind::Index(_, _) => PREC_POSTFIX,
        ExprKind::If { .. } => PREC_ATOM,
        _ => PREC_ATOM,
    }
}

fn fmt_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    let prec = expr_precedence(e);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match &e.kind {
        ExprKind::Number(n) => write!(f, "{}", format_float(*n))?,
        ExprKind::Boolean(b) => write!(f, "{}", b)?,
        ExprKind::Text(s) => write!(
            f,
            "\"{}\"",
            s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
        )?,
        ExprKind::List(items) => {
            write!(f, "[")?;
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                fmt_expr(f, item, 0)?;
            }
            write!(f, "]")?;
        }
        ExprKind::Var(name) => write!(f, "{}", name)?,
        ExprKind::Unary(UnaryOp::Neg, inner) => {
            write!(f, "-")?;
            fmt_expr(f, inner, PREC_UNARY)?;
        }
        ExprKind::Unary(UnaryOp::Not, inner) => {
            write!(f, "not ")?;
            fmt_expr(f, inner, PREC_NOT)?;
        }
        ExprKind::Binary(op, lhs, rhs) => {
            let p = op.precedence();
            // Comparisons do not chain, so a nested comparison needs parens
            // on either side; the other operators are left-associative.
            let non_assoc = matches!(
                op,
                BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge
            );
            fmt_expr(f, lhs, if non_assoc { p + 1 } else { p })?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(f, rhs, p + 1)?;
        }
        ExprKind::Index(base, index) => {
            fmt_expr(f, base, PREC_POSTFIX)?;
            write!(f, "[")?;
            fmt_expr(f, index, 0)?;
            write!(f, "]")?;
        }
        ExprKind::Len(inner) => {
            write!(f, "len(")?;
            fmt_expr(f, inner, 0)?;
            write!(f, ")")?;
        }
        ExprKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            write!(f, "if ")?;
            fmt_expr(f, cond, 0)?;
            write!(f, " ")?;
            fmt_block(f, then_branch)?;
            write!(f, " else ")?;
            fmt_block(f, else_branch)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn fmt_block(f: &mut fmt::Formatter<'_>, block: &Block) -> fmt::Result {
    write!(f, "{{ ")?;
    for (name, expr) in &block.bindings {
        write!(f, "let {} = ", name)?;
        fmt_expr(f, expr, 0)?;
        write!(f, "; ")?;
    }
    fmt_expr(f, &block.value, 0)?;
    write!(f, " }}")
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(f, self, 0)
    }
}

impl fmt::Display for Program {
    /// Canonical single-line form; `parse(program.to_string())` yields an
    /// AST equal to `program`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fn {}({}) ", self.name, self.params.join(", "))?;
        fmt_block(f, &self.body)
    }
}
