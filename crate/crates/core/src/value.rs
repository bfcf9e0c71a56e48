//! Heterogeneous values carried by trace nodes.

use std::collections::BTreeMap;

/// A value held by a graph node. Everything the engine can optimize or
/// compute over is one of these variants.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    /// 64-bit float.
    Number(f64),
    /// Signed integer.
    Integer(i64),
    Boolean(bool),
    /// UTF-8 text.
    Text(String),
    /// Source text in the bundled expression language. Parse-checked at
    /// the moment it is stored into a graph.
    Code(String),
    /// Ordered values.
    List(Vec<Value>),
    /// Text-keyed values.
    Map(BTreeMap<String, Value>),
}

impl Value {
    /// Lowercase kind token, also used for auto-naming nodes ("float0").
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Number(_) => "float",
            Value::Integer(_) => "int",
            Value::Boolean(_) => "bool",
            Value::Text(_) => "str",
            Value::Code(_) => "code",
            Value::List(_) => "list",
            Value::Map(_) => "dict",
        }
    }

    /// Data-type token used in report value lines. Same as [`Value::kind`]
    /// except code, which renders as `(code)`.
    pub fn type_token(&self) -> &'static str {
        match self {
            Value::Code(_) => "(code)",
            other => other.kind(),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Boolean(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_code(&self) -> Option<&str> {
        match self {
            Value::Code(src) => Some(src),
            _ => None,
        }
    }

    /// True unless the value (or any nested value) is a non-finite number.
    pub fn is_finite(&self) -> bool {
        match self {
            Value::Number(n) => n.is_finite(),
            Value::List(items) => items.iter().all(Value::is_finite),
            Value::Map(entries) => entries.values().all(Value::is_finite),
            _ => true,
        }
    }

    /// Single-line rendering used in reports, DOT labels and memory blocks.
    ///
    /// Text renders quoted with escaped newlines; maps render with sorted
    /// keys; code renders as its (escaped) source.
    pub fn render_inline(&self) -> String {
        match self {
            Value::Number(n) => format_float(*n),
            Value::Integer(i) => i.to_string(),
            Value::Boolean(b) => b.to_string(),
            Value::Text(s) | Value::Code(s) => format!("\"{}\"", escape_text(s)),
            Value::List(items) => {
                let inner: Vec<String> = items.iter().map(Value::render_inline).collect();
                format!("[{}]", inner.join(", "))
            }
            Value::Map(entries) => {
                let inner: Vec<String> = entries
                    .iter()
                    .map(|(k, v)| format!("{}: {}", k, v.render_inline()))
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
        }
    }
}

/// Formats a float so that integral values keep their decimal point:
/// `6.0` renders as "6.0", never "6".
pub fn format_float(x: f64) -> String {
    format!("{:?}", x)
}

fn escape_text(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

/// True iff `name` is a valid identifier: letters, digits and underscores,
/// not starting with a digit, non-empty.
pub fn is_valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
