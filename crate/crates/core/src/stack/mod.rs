//! Progressive memory layers: identity (L0), essential recent memories
//! (L1), per-topic context (L2). Deep search (L3) is plain
//! [`Palace::search`] with no budget.

pub mod diary;

use serde::{Deserialize, Serialize};

use crate::aaak::compress;
use crate::error::{PalaceError, Result};
use crate::palace::Palace;
use crate::search::{SearchMode, SearchRequest};
use crate::timestamp::parse_timestamp;
use crate::types::is_identifier;

/// Upper bound on the whole wake-up payload.
pub const WAKEUP_MAX_TOKENS: usize = 900;

pub const PALACE_PROTOCOL: &str = "PALACE_PROTOCOL: You have a persistent memory palace of verbatim \
records. When a question touches people, projects, decisions or anything said in an earlier \
session, call recall first; always search before claiming ignorance. Quote recalled drawers \
rather than paraphrasing them. Save durable facts with remember and relationships with kg_add.";

/// Characters / 4, rounded up. A stand-in for a model tokenizer.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerBudget {
    pub l0_max: usize,
    pub l1_min: usize,
    pub l1_max: usize,
    pub l2_per_topic_max: usize,
}

impl Default for LayerBudget {
    fn default() -> Self {
        LayerBudget {
            l0_max: 150,
            l1_min: 500,
            l1_max: 800,
            l2_per_topic_max: 500,
        }
    }
}

impl LayerBudget {
    pub fn validate(&self) -> Result<()> {
        if self.l0_max == 0 || self.l1_min == 0 || self.l1_max == 0 || self.l2_per_topic_max == 0 {
            return Err(PalaceError::invalid("layer budgets must be positive"));
        }
        if self.l1_min > self.l1_max {
            return Err(PalaceError::invalid("l1_min exceeds l1_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeupPayload {
    pub l0_text: String,
    pub l1_text: String,
    pub token_estimate: usize,
    pub protocol_directive: String,
}

impl WakeupPayload {
    /// The payload as one block of text, in load order.
    pub fn render(&self) -> String {
        [self.l0_text.as_str(), self.l1_text.as_str(), self.protocol_directive.as_str()]
            .iter()
            .filter(|s| !s.is_empty())
            .copied()
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Appends lines while the joined text stays within `max_tokens`; stops at
/// the first line that does not fit.
fn fill_lines(lines: impl Iterator<Item = String>, max_tokens: usize) -> String {
    let mut out = String::new();
    for line in lines {
        let candidate_len = if out.is_empty() {
            line.chars().count()
        } else {
            out.chars().count() + 1 + line.chars().count()
        };
        if candidate_len.div_ceil(4) > max_tokens {
            break;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&line);
    }
    out
}

fn build_l1_capped(palace: &Palace, max_tokens: usize) -> Result<String> {
    let mut drawers = palace.drawers()?;
    let epoch = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    let key = |ts: &str| parse_timestamp(ts).unwrap_or(epoch);
    drawers.sort_by(|a, b| key(&b.timestamp).cmp(&key(&a.timestamp)).then_with(|| a.id.cmp(&b.id)));
    let lines = drawers.into_iter().filter_map(|d| {
        let sentence = compress(&d.content).key_sentences.into_iter().next()?;
        Some(format!("[{}/{}] {}", d.address.wing, d.address.room, one_line(&sentence)))
    });
    Ok(fill_lines(lines, max_tokens))
}

/// Most recent drawers first, one key-sentence line each, within `l1_max`.
pub fn build_l1(palace: &Palace, budget: &LayerBudget) -> Result<String> {
    budget.validate()?;
    build_l1_capped(palace, budget.l1_max)
}

pub fn wakeup(palace: &Palace, identity_text: &str) -> Result<WakeupPayload> {
    wakeup_with(palace, identity_text, &LayerBudget::default())
}

/// L0 + L1 + directive. L1 gets whatever the 900-token ceiling leaves after
/// identity and directive, capped at `l1_max`.
pub fn wakeup_with(palace: &Palace, identity_text: &str, budget: &LayerBudget) -> Result<WakeupPayload> {
    budget.validate()?;
    let l0_tokens = estimate_tokens(identity_text);
    if l0_tokens > budget.l0_max {
        return Err(PalaceError::invalid(format!(
            "identity text is ~{l0_tokens} tokens, the L0 limit is {}",
            budget.l0_max
        )));
    }
    let directive_tokens = estimate_tokens(PALACE_PROTOCOL);
    let room = WAKEUP_MAX_TOKENS.saturating_sub(l0_tokens + directive_tokens);
    let l1_text = build_l1_capped(palace, budget.l1_max.min(room))?;
    Ok(WakeupPayload {
        token_estimate: l0_tokens + estimate_tokens(&l1_text) + directive_tokens,
        l0_text: identity_text.to_string(),
        l1_text,
        protocol_directive: PALACE_PROTOCOL.to_string(),
    })
}

/// Key sentences of the drawers in room `topic` most related to the topic
/// name, within `l2_per_topic_max`. Unknown rooms give an empty string.
pub fn load_topic_context(palace: &Palace, topic: &str, budget: &LayerBudget) -> Result<String> {
    budget.validate()?;
    if !is_identifier(topic) {
        return Ok(String::new());
    }
    let req = SearchRequest {
        room: Some(topic.to_string()),
        mode: SearchMode::Semantic,
        n_results: 20,
        ..SearchRequest::new(topic.replace('_', " "))
    };
    let results = palace.search(&req)?;
    let lines = results.into_iter().filter_map(|r| {
        let rec = compress(&r.content);
        if rec.key_sentences.is_empty() {
            return None;
        }
        Some(one_line(&rec.key_sentences.join(" ")))
    });
    Ok(fill_lines(lines, budget.l2_per_topic_max))
}
