//! Lexer and recursive-descent parser for the expression language.

use thiserror::Error;

use super::ast::{BinaryOp, Block, Expr, ExprKind, Program, Span, UnaryOp};

#[derive(Debug, Clone, Error, PartialEq)]
#[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: String,
    pub found: String,
}

impl SyntaxError {
    fn new(span: Span, expected: &str, found: impl Into<String>) -> Self {
        SyntaxError {
            line: span.line,
            col: span.col,
            expected: expected.to_string(),
            found: found.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(f64),
    Str(String),
    Ident(String),
    Keyword(&'static str),
    Punct(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Ident(name) => format!("'{name}'"),
            Tok::Keyword(k) => format!("'{k}'"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "fn", "let", "if", "else", "true", "false", "and", "or", "not", "len",
];

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(source: &'a str) -> Self {
        Lexer {
            chars: source.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span::new(self.line, self.col)
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Span)>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
                self.bump();
            }
            let span = self.span();
            let Some(&c) = self.chars.peek() else {
                out.push((Tok::Eof, span));
                return Ok(out);
            };
            if c.is_ascii_digit() {
                out.push((self.lex_number(span)?, span));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let mut word = String::new();
                while matches!(self.chars.peek(), Some(c) if c.is_ascii_alphanumeric() || *c == '_')
                {
                    word.push(self.bump().unwrap());
                }
                match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => out.push((Tok::Keyword(k), span)),
                    None => out.push((Tok::Ident(word), span)),
                }
            } else if c == '"' {
                out.push((self.lex_string(span)?, span));
            } else {
                self.bump();
                let tok = match c {
                    '(' => "(",
                    ')' => ")",
                    '{' => "{",
                    '}' => "}",
                    '[' => "[",
                    ']' => "]",
                    ',' => ",",
                    ';' => ";",
                    '+' => "+",
                    '-' => "-",
                    '*' => "*",
                    '/' => "/",
                    '%' => "%",
                    '=' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            "=="
                        } else {
                            "="
                        }
                    }
                    '!' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            "!="
                        } else {
                            return Err(SyntaxError::new(span, "'!='", "'!'"));
                        }
                    }
                    '<' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            "<="
                        } else {
                            "<"
                        }
                    }
                    '>' => {
                        if self.chars.peek() == Some(&'=') {
                            self.bump();
                            ">="
                        } else {
                            ">"
                        }
                    }
                    other => {
                        return Err(SyntaxError::new(span, "a token", format!("'{other}'")));
                    }
                };
                out.push((Tok::Punct(tok), span));
            }
        }
    }

    fn lex_number(&mut self, span: Span) -> Result<Tok, SyntaxError> {
        let mut text = String::new();
        while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
            text.push(self.bump().unwrap());
        }
        if self.chars.peek() == Some(&'.') {
            text.push(self.bump().unwrap());
            if !matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                return Err(SyntaxError::new(self.span(), "digits after '.'", "no digit"));
            }
            while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                text.push(self.bump().unwrap());
            }
        }
        if matches!(self.chars.peek(), Some('e') | Some('E')) {
            text.push(self.bump().unwrap());
            if matches!(self.chars.peek(), Some('+') | Some('-')) {
                text.push(self.bump().unwrap());
            }
            if !matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                return Err(SyntaxError::new(self.span(), "exponent digits", "no digit"));
            }
            while matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                text.push(self.bump().unwrap());
            }
        }
        let value: f64 = text
            .parse()
            .map_err(|_| SyntaxError::new(span, "a number literal", text.clone()))?;
        if !value.is_finite() {
            return Err(SyntaxError::new(span, "a finite number literal", text));
        }
        Ok(Tok::Number(value))
    }

    fn lex_string(&mut self, span: Span) -> Result<Tok, SyntaxError> {
        self.bump(); // opening quote
        let mut text = String::new();
        loop {
            match self.bump() {
                None => return Err(SyntaxError::new(span, "closing '\"'", "end of input")),
                Some('"') => return Ok(Tok::Str(text)),
                Some('\\') => match self.bump() {
                    Some('n') => text.push('\n'),
                    Some('"') => text.push('"'),
                    Some('\\') => text.push('\\'),
                    Some(other) => {
                        return Err(SyntaxError::new(
                            self.span(),
                            "escape '\\n', '\\\"' or '\\\\'",
                            format!("'\\{other}'"),
                        ));
                    }
                    None => return Err(SyntaxError::new(span, "closing '\"'", "end of input")),
                },
                Some(c) => text.push(c),
            }
        }
    }
}

struct Parser {
    tokens: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek_span(&self) -> Span {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let item = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        item
    }

    fn expect_punct(&mut self, p: &'static str) -> Result<Span, SyntaxError> {
        match self.peek() {
            Tok::Punct(q) if *q == p => Ok(self.bump().1),
            found => Err(SyntaxError::new(
                self.peek_span(),
                &format!("'{p}'"),
                found.describe(),
            )),
        }
    }

    fn expect_keyword(&mut self, k: &'static str) -> Result<Span, SyntaxError> {
        match self.peek() {
            Tok::Keyword(q) if *q == k => Ok(self.bump().1),
            found => Err(SyntaxError::new(
                self.peek_span(),
                &format!("'{k}'"),
                found.describe(),
            )),
        }
    }

    fn expect_ident(&mut self, what: &str) -> Result<(String, Span), SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let span = self.bump().1;
                Ok((name, span))
            }
            found => Err(SyntaxError::new(self.peek_span(), what, found.describe())),
        }
    }

    fn eat_punct(&mut self, p: &'static str) -> bool {
        if matches!(self.peek(), Tok::Punct(q) if *q == p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn program(&mut self) -> Result<Program, SyntaxError> {
        self.expect_keyword("fn")?;
        let (name, _) = self.expect_ident("function name")?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !matches!(self.peek(), Tok::Punct(")")) {
            loop {
                let (param, span) = self.expect_ident("parameter name")?;
                if params.contains(&param) {
                    return Err(SyntaxError::new(
                        span,
                        "a distinct parameter name",
                        format!("duplicate '{param}'"),
                    ));
                }
                params.push(param);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let body = self.block()?;
        match self.peek() {
            Tok::Eof => Ok(Program { name, params, body }),
            found => Err(SyntaxError::new(
                self.peek_span(),
                "end of input",
                found.describe(),
            )),
        }
    }

    fn block(&mut self) -> Result<Block, SyntaxError> {
        self.expect_punct("{")?;
        let mut bindings = Vec::new();
        while matches!(self.peek(), Tok::Keyword("let")) {
            self.bump();
            let (name, _) = self.expect_ident("binding name")?;
            self.expect_punct("=")?;
            let expr = self.expr()?;
            self.expect_punct(";")?;
            bindings.push((name, expr));
        }
        let value = self.expr()?;
        self.expect_punct("}")?;
        Ok(Block {
            bindings,
            value: Box::new(value),
        })
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.and_expr()?;
        while matches!(self.peek(), Tok::Keyword("or")) {
            let span = self.bump().1;
            let rhs = self.and_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(BinaryOp::Or, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.not_expr()?;
        while matches!(self.peek(), Tok::Keyword("and")) {
            let span = self.bump().1;
            let rhs = self.not_expr()?;
            lhs = Expr {
                kind: ExprKind::Binary(BinaryOp::And, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        if matches!(self.peek(), Tok::Keyword("not")) {
            let span = self.bump().1;
            let inner = self.not_expr()?;
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Not, Box::new(inner)),
                span,
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, SyntaxError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Punct("==") => Some(BinaryOp::Eq),
            Tok::Punct("!=") => Some(BinaryOp::Ne),
            Tok::Punct("<") => Some(BinaryOp::Lt),
            Tok::Punct("<=") => Some(BinaryOp::Le),
            Tok::Punct(">") => Some(BinaryOp::Gt),
            Tok::Punct(">=") => Some(BinaryOp::Ge),
            _ => None,
        };
        let Some(op) = op else { return Ok(lhs) };
        let span = self.bump().1;
        let rhs = self.additive()?;
        Ok(Expr {
            kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
            span,
        })
    }

    fn additive(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("+") => BinaryOp::Add,
                Tok::Punct("-") => BinaryOp::Sub,
                _ => break,
            };
            let span = self.bump().1;
            let rhs = self.term()?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Punct("*") => BinaryOp::Mul,
                Tok::Punct("/") => BinaryOp::Div,
                Tok::Punct("%") => BinaryOp::Rem,
                _ => break,
            };
            let span = self.bump().1;
            let rhs = self.unary()?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if matches!(self.peek(), Tok::Punct("-")) {
            let span = self.bump().1;
            let inner = self.unary()?;
            // Fold negation of a literal so "-2.0" round-trips as a literal.
            if let ExprKind::Number(n) = inner.kind {
                return Ok(Expr {
                    kind: ExprKind::Number(-n),
                    span,
                });
            }
            return Ok(Expr {
                kind: ExprKind::Unary(UnaryOp::Neg, Box::new(inner)),
                span,
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut base = self.primary()?;
        while matches!(self.peek(), Tok::Punct("[")) {
            let span = self.bump().1;
            let index = self.expr()?;
            self.expect_punct("]")?;
            base = Expr {
                kind: ExprKind::Index(Box::new(base), Box::new(index)),
                span,
            };
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.peek_span();
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Number(n),
                    span,
                })
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Text(s),
                    span,
                })
            }
            Tok::Keyword("true") => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Boolean(true),
                    span,
                })
            }
            Tok::Keyword("false") => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Boolean(false),
                    span,
                })
            }
            Tok::Keyword("len") => {
                self.bump();
                self.expect_punct("(")?;
                let inner = self.expr()?;
                self.expect_punct(")")?;
                Ok(Expr {
                    kind: ExprKind::Len(Box::new(inner)),
                    span,
                })
            }
            Tok::Keyword("if") => self.if_expr(),
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr {
                    kind: ExprKind::Var(name),
                    span,
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let inner = self.expr()?;
                self.expect_punct(")")?;
                Ok(inner)
            }
            Tok::Punct("[") => {
                self.bump();
                let mut items = Vec::new();
                if !matches!(self.peek(), Tok::Punct("]")) {
                    loop {
                        items.push(self.expr()?);
                        if !self.eat_punct(",") {
                            break;
                        }
                    }
                }
                self.expect_punct("]")?;
                Ok(Expr {
                    kind: ExprKind::List(items),
                    span,
                })
            }
            found => Err(SyntaxError::new(span, "an expression", found.describe())),
        }
    }

    fn if_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.expect_keyword("if")?;
        let cond = self.expr()?;
        let then_branch = self.block()?;
        self.expect_keyword("else")?;
        let else_branch = if matches!(self.peek(), Tok::Keyword("if")) {
            let nested = self.if_expr()?;
            Block {
                bindings: Vec::new(),
                value: Box::new(nested),
            }
        } else {
            self.block()?
        };
        Ok(Expr {
            kind: ExprKind::If {
                cond: Box::new(cond),
                then_branch,
                else_branch,
            },
            span,
        })
    }
}

/// Parses a function definition.
pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    let tokens = Lexer::new(source).tokenize()?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.program()
}
