//! Deterministic rule-based proposers satisfying the chat-completion
//! contract, used for reproducible runs and tests.
//!
//! Three environment kinds are recognized. The numeric-sign proposer reads
//! the requested direction from the feedback and steps the parameter by a
//! fixed 0.25 in the direction given by the gradient of the output (falling
//! back to a seeded pseudo-random sign when the trace is masked). The
//! binary-match proposer maps the failing check to its bit parent through
//! the trace and flips exactly that bit. The battleship proposer walks a
//! fixed list of policy bodies ordered from naive to parity search.

use std::collections::BTreeMap;

use thiserror::Error;

use opto_core::Value;

use crate::llmclient::TraceCtx;
use crate::suggestion::Suggestion;

pub const SCRIPTED_STEP_SIZE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    NumericSign,
    BinaryMatch,
    BattleshipHeuristic,
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("unrecognized feedback: {0}")]
pub struct UnrecognizedFeedback(pub String);

/// Policy bodies for the battleship demo, naive first, parity search last.
/// Each takes the board map and `plan`, the number of marked cells so far.
pub const BATTLESHIP_HEURISTICS: [&str; 3] = [
    "fn act(map, plan) { [0.0, 0.0] }",
    "fn act(map, plan) { let w = len(map[0]); let r = (plan - (plan % w)) / w; let c = plan % w; [r, c] }",
    "fn act(map, plan) { let w = len(map[0]); let h = len(map); let stride = (w - (w % 2)) / 2; let half = (w * h - ((w * h) % 2)) / 2; if plan < half { let r = (plan - (plan % stride)) / stride; let c = 2 * (plan % stride) + (r % 2); [r, c] } else { let k = plan - half; let r = (k - (k % stride)) / stride; let c = 2 * (k % stride) + ((r + 1) % 2); [r, c] } }",
];

/// One `<data_type> <name> = <value>` line recovered from a report.
#[derive(Debug, Clone, PartialEq)]
pub struct VarEntry {
    pub type_token: String,
    pub name: String,
    pub raw: String,
}

/// The pieces of a rendered problem report that scripted proposers read.
#[derive(Debug, Clone, Default)]
pub struct ReportView {
    pub instruction: String,
    pub code_lines: Vec<String>,
    pub variables: Vec<VarEntry>,
    pub feedback: String,
}

impl ReportView {
    /// Recovers sections from rendered report text. Returns `None` when the
    /// text has no recognizable section headers.
    pub fn parse(text: &str) -> Option<ReportView> {
        let mut sections: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            if line.starts_with('#') && !line.contains(' ') {
                let header = line.trim_end_matches(':').to_string();
                sections.entry(header.clone()).or_default();
                current = Some(header);
            } else if let Some(section) = &current {
                sections.get_mut(section).unwrap().push(line.to_string());
            }
        }
        if !sections.contains_key("#Feedback") {
            return None;
        }
        let joined = |key: &str| -> String {
            sections
                .get(key)
                .map(|lines| lines.join("\n").trim().to_string())
                .unwrap_or_default()
        };
        let code_lines = sections
            .get("#Code")
            .map(|lines| {
                lines
                    .iter()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.to_string())
                    .collect()
            })
            .unwrap_or_default();
        let variables = sections
            .get("#Variables")
            .map(|lines| parse_value_lines(lines))
            .unwrap_or_default();
        Some(ReportView {
            instruction: joined("#Instruction"),
            code_lines,
            variables,
            feedback: joined("#Feedback"),
        })
    }

    pub fn variable(&self, name: &str) -> Option<&VarEntry> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn first_of_type(&self, type_token: &str) -> Option<&VarEntry> {
        self.variables.iter().find(|v| v.type_token == type_token)
    }
}

fn parse_value_lines(lines: &[String]) -> Vec<VarEntry> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = &lines[i];
        i += 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("(code) ") {
            // "(code) name = ```" followed by source lines and a closing fence.
            let Some(name) = rest.strip_suffix(" = ```") else { continue };
            let mut source = Vec::new();
            while i < lines.len() && lines[i] != "```" {
                source.push(lines[i].clone());
                i += 1;
            }
            i += 1; // closing fence
            out.push(VarEntry {
                type_token: "(code)".to_string(),
                name: name.to_string(),
                raw: source.join("\n"),
            });
        } else if let Some((type_token, rest)) = line.split_once(' ') {
            if let Some((name, raw)) = rest.split_once(" = ") {
                out.push(VarEntry {
                    type_token: type_token.to_string(),
                    name: name.to_string(),
                    raw: raw.to_string(),
                });
            }
        }
    }
    out
}

/// Deterministic pseudo-random stream for the trace-masked fallback.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Picks the environment kind a report belongs to, from its feedback text
/// and variable types.
pub fn detect_env_kind(view: &ReportView) -> Option<EnvKind> {
    let fb = &view.feedback;
    if fb.contains("check failed") || fb.contains("All checks succeeded") {
        return Some(EnvKind::BinaryMatch);
    }
    if fb.contains("should be larger") || fb.contains("should be smaller") || fb.starts_with("Success")
    {
        return Some(EnvKind::NumericSign);
    }
    if view.first_of_type("(code)").is_some() {
        return Some(EnvKind::BattleshipHeuristic);
    }
    None
}

/// Produces a suggestion for one report. `ctx` carries the live trace
/// (graph and output gradients); without it the numeric proposer degrades
/// to a pseudo-random sign drawn from `rng`.
pub fn scripted_propose(
    view: &ReportView,
    ctx: Option<&TraceCtx<'_>>,
    kind: EnvKind,
    rng: &mut u64,
) -> Result<Suggestion, UnrecognizedFeedback> {
    match kind {
        EnvKind::NumericSign => numeric_sign(view, ctx, rng),
        EnvKind::BinaryMatch => binary_match(view),
        EnvKind::BattleshipHeuristic => battleship(view),
    }
}

fn numeric_sign(
    view: &ReportView,
    ctx: Option<&TraceCtx<'_>>,
    rng: &mut u64,
) -> Result<Suggestion, UnrecognizedFeedback> {
    let feedback = &view.feedback;
    if feedback.starts_with("Success") {
        return Ok(Suggestion::terminate());
    }
    let direction = if feedback.contains("larger") {
        1.0
    } else if feedback.contains("smaller") {
        -1.0
    } else {
        return Err(UnrecognizedFeedback(feedback.clone()));
    };
    let var = view
        .first_of_type("float")
        .ok_or_else(|| UnrecognizedFeedback("no float variable in report".to_string()))?;
    let current: f64 = var
        .raw
        .trim()
        .parse()
        .map_err(|_| UnrecognizedFeedback(format!("unreadable value {:?}", var.raw)))?;

    // With the trace visible, the output's gradient at the parameter tells
    // us which way the parameter moves the output; masked, guess a sign.
    let slope_sign = ctx
        .and_then(|ctx| {
            let id = ctx.graph.node_by_name(&var.name)?.id;
            let g = ctx.gradients?.get(&id)?;
            Some(if *g >= 0.0 { 1.0 } else { -1.0 })
        })
        .unwrap_or_else(|| {
            if splitmix64(rng) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        });

    let next = current + SCRIPTED_STEP_SIZE * direction * slope_sign;
    let mut updates = BTreeMap::new();
    updates.insert(var.name.clone(), Value::Number(next));
    Ok(Suggestion {
        reasoning: format!(
            "The feedback asks for a {} output; stepping {} by {:+}.",
            if direction > 0.0 { "larger" } else { "smaller" },
            var.name,
            SCRIPTED_STEP_SIZE * direction * slope_sign
        ),
        answer: String::new(),
        updates,
        terminate: false,
    })
}

fn binary_match(view: &ReportView) -> Result<Suggestion, UnrecognizedFeedback> {
    if view.feedback.contains("All checks succeeded") {
        return Ok(Suggestion::terminate());
    }
    // The failing check is the last code line; its bit parent is the bit
    // examined by that check.
    let last = view
        .code_lines
        .last()
        .ok_or_else(|| UnrecognizedFeedback("no code lines in report".to_string()))?;
    let args = last
        .split_once('(')
        .and_then(|(_, rest)| rest.strip_suffix(')'))
        .ok_or_else(|| UnrecognizedFeedback(format!("unreadable code line {last:?}")))?;
    let bit_name = args
        .split(',')
        .map(str::trim)
        .find(|arg| arg.starts_with("bit"))
        .ok_or_else(|| UnrecognizedFeedback(format!("no bit argument in {last:?}")))?;
    let var = view
        .variable(bit_name)
        .ok_or_else(|| UnrecognizedFeedback(format!("bit {bit_name} not in #Variables")))?;
    let flipped = match var.raw.trim() {
        "true" => false,
        "false" => true,
        other => return Err(UnrecognizedFeedback(format!("unreadable bit value {other:?}"))),
    };
    let mut updates = BTreeMap::new();
    updates.insert(bit_name.to_string(), Value::Boolean(flipped));
    Ok(Suggestion {
        reasoning: format!("{}; flipping {bit_name}.", view.feedback),
        answer: String::new(),
        updates,
        terminate: false,
    })
}

fn battleship(view: &ReportView) -> Result<Suggestion, UnrecognizedFeedback> {
    if view.feedback.contains("sank all") {
        return Ok(Suggestion::terminate());
    }
    let var = view
        .first_of_type("(code)")
        .ok_or_else(|| UnrecognizedFeedback("no code variable in report".to_string()))?;
    let current = var.raw.trim();
    let position = BATTLESHIP_HEURISTICS.iter().position(|h| *h == current);
    let next = match position {
        Some(i) if i + 1 < BATTLESHIP_HEURISTICS.len() => BATTLESHIP_HEURISTICS[i + 1],
        Some(_) => return Ok(Suggestion::terminate()),
        // Unknown (e.g. broken) code: restart the list from the naive body.
        None => BATTLESHIP_HEURISTICS[0],
    };
    let mut updates = BTreeMap::new();
    updates.insert(var.name.clone(), Value::Code(next.to_string()));
    Ok(Suggestion {
        reasoning: format!(
            "Feedback was {:?}; trying the next search heuristic.",
            view.feedback
        ),
        answer: String::new(),
        updates,
        terminate: false,
    })
}

/// Past (variables, feedback) pairs recovered from a memory-only prompt.
pub fn parse_memory_blocks(text: &str) -> Vec<(BTreeMap<String, String>, String)> {
    let mut blocks = Vec::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        if line.trim() != "{" {
            continue;
        }
        let mut variables = BTreeMap::new();
        let mut feedback = String::new();
        for line in lines.by_ref() {
            let trimmed = line.trim();
            if trimmed == "}" {
                break;
            }
            if trimmed == "\"variables\": {" || trimmed == "}," {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("\"feedback\": ") {
                feedback = rest.to_string();
            } else if let Some((name, value)) = trimmed.split_once(": ") {
                variables.insert(name.to_string(), value.to_string());
            }
        }
        blocks.push((variables, feedback));
    }
    blocks
}

/// Memory-only proposer for the bit-matching task: no trace, so it walks
/// bit positions round-robin from the best assignment seen so far. The
/// graph-aware proposer needs at most one step per wrong bit; this one
/// spends a full cycle locating each invisible failure.
pub fn opro_binmatch_propose(blocks: &[(BTreeMap<String, String>, String)]) -> Suggestion {
    fn score(feedback: &str) -> usize {
        if feedback.contains("All checks succeeded") {
            return usize::MAX;
        }
        let digits: String = feedback.chars().take_while(char::is_ascii_digit).collect();
        digits.parse::<usize>().map(|n| n.saturating_sub(1)).unwrap_or(0)
    }

    let Some(first) = blocks.first() else {
        return Suggestion::terminate();
    };
    let mut best = first;
    for block in blocks {
        if score(&block.1) > score(&best.1) {
            best = block;
        }
    }
    if score(&best.1) == usize::MAX {
        return Suggestion::terminate();
    }
    let bit_names: Vec<&String> = best.0.keys().filter(|k| k.starts_with("bit")).collect();
    let k = bit_names.len();
    if k == 0 {
        return Suggestion::terminate();
    }
    let flip = (blocks.len() - 1) % k;
    let mut updates = BTreeMap::new();
    for (i, name) in bit_names.iter().enumerate() {
        let current = best.0[*name].trim() == "true";
        let bit = if i == flip { !current } else { current };
        updates.insert((*name).clone(), Value::Boolean(bit));
    }
    Suggestion {
        reasoning: format!(
            "Best attempt so far passed {} check(s); flipping bit position {flip}.",
            score(&best.1)
        ),
        answer: String::new(),
        updates,
        terminate: false,
    }
}
