//! Canonical reply grammar for decisions:
//!
//! ```text
//! Reasoning: <free text, may span lines>
//! Decision: <AC|DC|IDLE|STOP>
//! ```

use thiserror::Error;

use crate::decision::MetaAction;

/// Substituted when a reply carries a valid decision but no reasoning text.
pub const MISSING_REASONING: &str = "(no reasoning given)";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{reason}")]
pub struct ReplyParseError {
    pub reason: String,
    pub raw: String,
}

fn find_label(lower: &str, label: &str, last: bool) -> Option<usize> {
    let found = if last { lower.rfind(label) } else { lower.find(label) };
    found.map(|i| i + label.len())
}

/// Extracts `(reasoning, action)`; labels are case-insensitive and the last `Decision:`
/// label wins.
pub fn parse_decision(text: &str) -> Result<(String, MetaAction), ReplyParseError> {
    let err = |reason: String| ReplyParseError { reason, raw: text.to_string() };
    let lower = text.to_ascii_lowercase();
    let after = find_label(&lower, "decision:", true).ok_or_else(|| err("missing 'Decision:' label".into()))?;
    let token = text[after..]
        .split_whitespace()
        .next()
        .ok_or_else(|| err("empty decision".into()))?;
    let action: MetaAction = token.parse().map_err(|e: crate::decision::UnknownAction| err(e.to_string()))?;

    let head_end = after - "decision:".len();
    let head = &text[..head_end];
    let head_lower = &lower[..head_end];
    let reasoning = match find_label(head_lower, "reasoning:", false) {
        Some(i) => &head[i..],
        None => head,
    };
    let reasoning = reasoning.trim().trim_end_matches(['*', '#']).trim();
    let reasoning = if reasoning.is_empty() { MISSING_REASONING.to_string() } else { reasoning.to_string() };
    Ok((reasoning, action))
}

pub fn render_decision(reasoning: &str, action: MetaAction) -> String {
    format!("Reasoning: {}\nDecision: {}", reasoning.trim(), action)
}
