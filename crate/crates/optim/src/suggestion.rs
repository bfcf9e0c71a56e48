//! Optimizer responses: parsing the JSON suggestion format and applying
//! updates to trainable parameters with per-update coercion and rejection.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use opto_core::exprlang;
use opto_core::value::format_float;
use opto_core::{Graph, GraphError, NodeId, Value};

use crate::json::json_to_value;

/// A parsed optimizer response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Suggestion {
    pub reasoning: String,
    pub answer: String,
    /// Proposed new values keyed by parameter name.
    pub updates: BTreeMap<String, Value>,
    /// True for a bare TERMINATE response; implies `updates` is empty.
    pub terminate: bool,
}

impl Suggestion {
    pub fn terminate() -> Self {
        Suggestion {
            terminate: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("unparseable response: {0}")]
pub struct Unparseable(pub String);

/// Extracts the first balanced JSON object from `text`, stripping markdown
/// code fences first. A response with no JSON object but containing the
/// bare token TERMINATE parses as a terminate suggestion.
pub fn parse_response(text: &str) -> Result<Suggestion, Unparseable> {
    let stripped: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");

    if let Some(object) = first_balanced_object(&stripped) {
        let json: serde_json::Value = serde_json::from_str(object)
            .map_err(|e| Unparseable(format!("invalid json: {e}")))?;
        let serde_json::Value::Object(map) = json else {
            return Err(Unparseable("top-level json is not an object".to_string()));
        };
        let text_of = |key: &str| -> String {
            match map.get(key) {
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(other) => other.to_string(),
                None => String::new(),
            }
        };
        let mut updates = BTreeMap::new();
        if let Some(serde_json::Value::Object(suggestion)) = map.get("suggestion") {
            for (name, value) in suggestion {
                updates.insert(name.clone(), json_to_value(value));
            }
        }
        return Ok(Suggestion {
            reasoning: text_of("reasoning"),
            answer: text_of("answer"),
            updates,
            terminate: false,
        });
    }

    if stripped.contains("TERMINATE") {
        return Ok(Suggestion::terminate());
    }
    Err(Unparseable("no json object and no TERMINATE token".to_string()))
}

/// Finds the first `{ ... }` region with balanced braces, skipping braces
/// inside string literals.
fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &byte) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if byte == b'\\' {
                escaped = true;
            } else if byte == b'"' {
                in_string = false;
            }
            continue;
        }
        match byte {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + offset + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Why a single update was not applied.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    UnknownParameter,
    KindMismatch { expected: &'static str, got: String },
    InvalidCode(String),
    SignatureMismatch(String),
    NonFinite,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::UnknownParameter => write!(f, "unknown parameter"),
            RejectReason::KindMismatch { expected, got } => {
                write!(f, "cannot coerce {got} to {expected}")
            }
            RejectReason::InvalidCode(e) => write!(f, "code does not parse: {e}"),
            RejectReason::SignatureMismatch(e) => write!(f, "{e}"),
            RejectReason::NonFinite => write!(f, "non-finite number"),
        }
    }
}

/// Outcome of applying one suggestion: per-update results, never a global
/// failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApplyResult {
    pub applied: Vec<String>,
    pub rejected: Vec<(String, RejectReason)>,
}

impl ApplyResult {
    pub fn rejection_summary(&self) -> Option<String> {
        if self.rejected.is_empty() {
            return None;
        }
        let parts: Vec<String> = self
            .rejected
            .iter()
            .map(|(name, reason)| format!("'{name}' rejected ({reason})"))
            .collect();
        Some(parts.join("; "))
    }
}

/// Coerces an incoming value to the kind of `current`. Text parses to
/// numbers, numbers format to text; code must parse and keep the current
/// program's name and parameters. Ambiguous coercions reject.
fn coerce(current: &Value, incoming: &Value) -> Result<Value, RejectReason> {
    let got = || incoming.kind().to_string();
    match current {
        Value::Number(_) => match incoming {
            Value::Number(n) if n.is_finite() => Ok(Value::Number(*n)),
            Value::Number(_) => Err(RejectReason::NonFinite),
            Value::Integer(i) => Ok(Value::Number(*i as f64)),
            Value::Text(s) => match s.trim().parse::<f64>() {
                Ok(n) if n.is_finite() => Ok(Value::Number(n)),
                Ok(_) => Err(RejectReason::NonFinite),
                Err(_) => Err(RejectReason::KindMismatch {
                    expected: "float",
                    got: format!("str {s:?}"),
                }),
            },
            _ => Err(RejectReason::KindMismatch { expected: "float", got: got() }),
        },
        Value::Integer(_) => match incoming {
            Value::Integer(i) => Ok(Value::Integer(*i)),
            Value::Number(n) if n.fract() == 0.0 && n.is_finite() => Ok(Value::Integer(*n as i64)),
            Value::Text(s) => s
                .trim()
                .parse::<i64>()
                .map(Value::Integer)
                .map_err(|_| RejectReason::KindMismatch {
                    expected: "int",
                    got: format!("str {s:?}"),
                }),
            _ => Err(RejectReason::KindMismatch { expected: "int", got: got() }),
        },
        Value::Boolean(_) => match incoming {
            Value::Boolean(b) => Ok(Value::Boolean(*b)),
            Value::Text(s) => match s.trim() {
                "true" => Ok(Value::Boolean(true)),
                "false" => Ok(Value::Boolean(false)),
                _ => Err(RejectReason::KindMismatch {
                    expected: "bool",
                    got: format!("str {s:?}"),
                }),
            },
            _ => Err(RejectReason::KindMismatch { expected: "bool", got: got() }),
        },
        Value::Text(_) => match incoming {
            Value::Text(s) => Ok(Value::Text(s.clone())),
            Value::Number(n) => Ok(Value::Text(format_float(*n))),
            Value::Integer(i) => Ok(Value::Text(i.to_string())),
            Value::Boolean(b) => Ok(Value::Text(b.to_string())),
            _ => Err(RejectReason::KindMismatch { expected: "str", got: got() }),
        },
        Value::Code(current_src) => {
            let source = match incoming {
                Value::Text(s) | Value::Code(s) => s,
                _ => return Err(RejectReason::KindMismatch { expected: "(code)", got: got() }),
            };
            let proposed = exprlang::parse(source)
                .map_err(|e| RejectReason::InvalidCode(e.to_string()))?;
            let current_program =
                exprlang::parse(current_src).expect("stored code always parses");
            let params: Vec<&str> = current_program.params.iter().map(String::as_str).collect();
            exprlang::check_signature(&proposed, &current_program.name, &params)
                .map_err(|e| RejectReason::SignatureMismatch(e.to_string()))?;
            Ok(Value::Code(source.clone()))
        }
        Value::List(_) => match incoming {
            Value::List(items) => Ok(Value::List(items.clone())),
            _ => Err(RejectReason::KindMismatch { expected: "list", got: got() }),
        },
        Value::Map(_) => match incoming {
            Value::Map(entries) => Ok(Value::Map(entries.clone())),
            _ => Err(RejectReason::KindMismatch { expected: "dict", got: got() }),
        },
    }
}

/// Applies each named update that matches a trainable parameter; everything
/// else is recorded as rejected with its reason.
pub fn apply_suggestion(
    graph: &mut Graph,
    suggestion: &Suggestion,
    params: &[NodeId],
) -> ApplyResult {
    let mut result = ApplyResult::default();
    if suggestion.terminate {
        return result;
    }
    for (name, incoming) in &suggestion.updates {
        let target = params.iter().find(|&&id| {
            graph
                .node(id)
                .map(|node| node.name == *name && node.trainable)
                .unwrap_or(false)
        });
        let Some(&id) = target else {
            result
                .rejected
                .push((name.clone(), RejectReason::UnknownParameter));
            continue;
        };
        let current = graph.node(id).expect("param exists").value.clone();
        match coerce(&current, incoming) {
            Ok(value) => match graph.set_value(id, value) {
                Ok(()) => result.applied.push(name.clone()),
                Err(GraphError::NonFiniteNumber) => {
                    result.rejected.push((name.clone(), RejectReason::NonFinite));
                }
                Err(other) => {
                    result.rejected.push((
                        name.clone(),
                        RejectReason::SignatureMismatch(other.to_string()),
                    ));
                }
            },
            Err(reason) => result.rejected.push((name.clone(), reason)),
        }
    }
    result
}
