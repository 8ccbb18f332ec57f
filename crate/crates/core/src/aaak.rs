//! AAAK: a lossy, extractive one-line summary of a drawer.
//!
//! A record keeps entities, up to five topic words, up to three verbatim
//! key sentences, emotion tags and flags. There is no way back to the
//! original text; records are an auxiliary index, drawers stay
//! authoritative.
//!
//! Line format:
//!
//! ```text
//! AAAK|E:ent1,ent2|T:topic1,topic2|K:"sentence one"|"sentence two"|M:positive|F:todo,question
//! ```
//!
//! with an optional trailing `|D:<drawer id>`. Inside fields, `\`, `|`,
//! `,` and `"` are backslash-escaped and line breaks are written `\n`/`\r`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{PalaceError, Result};
use crate::kgraph::extract::extract_entities;
use crate::text::{is_stopword, sentence_spans, truncate_chars, words};

pub const MAX_TOPICS: usize = 5;
pub const MAX_KEY_SENTENCES: usize = 3;
pub const MAX_ENTITIES: usize = 8;
pub const KEY_SENTENCE_MAX_CHARS: usize = 160;
pub const FIRST_SENTENCE_WEIGHT: f64 = 1.5;
/// Records of sources longer than this are trimmed until strictly shorter
/// than the source.
pub const SHRINK_THRESHOLD_CHARS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Positive,
    Negative,
    Neutral,
    Urgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flag {
    Todo,
    Decision,
    Question,
    Fact,
}

macro_rules! vocab {
    ($ty:ident { $($var:ident => $s:literal),* $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$var),*];

            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $s),* }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = PalaceError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($ty::$var),)*
                    other => Err(PalaceError::invalid(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

vocab!(Emotion { Positive => "positive", Negative => "negative", Neutral => "neutral", Urgent => "urgent" });
vocab!(Flag { Todo => "todo", Decision => "decision", Question => "question", Fact => "fact" });

const POSITIVE: &[&str] = &[
    "awesome", "excellent", "excited", "glad", "good", "great", "happy", "love", "nice",
    "perfect", "solved", "success", "thanks", "works",
];
const NEGATIVE: &[&str] = &[
    "angry", "annoying", "bad", "broken", "bug", "crash", "fail", "failed", "failure",
    "frustrated", "hate", "problem", "sad", "worried", "wrong",
];
const URGENT: &[&str] = &[
    "asap", "blocker", "critical", "deadline", "emergency", "immediately", "urgent",
];
const TODO: &[&str] = &["fixme", "must", "should", "todo"];
const TODO_PHRASES: &[&[&str]] = &[&["need", "to"], &["have", "to"], &["remember", "to"], &["action", "item"]];
const DECISION: &[&str] = &["agreed", "chose", "decide", "decided", "decision", "settled"];
const DECISION_PHRASES: &[&[&str]] = &[&["going", "with"], &["go", "with"]];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AaakRecord {
    pub entities: Vec<String>,
    pub topics: Vec<String>,
    pub key_sentences: Vec<String>,
    pub emotions: Vec<Emotion>,
    pub flags: Vec<Flag>,
    pub source_drawer_id: Option<String>,
}

fn has_phrase(tokens: &[String], phrase: &[&str]) -> bool {
    tokens
        .windows(phrase.len())
        .any(|w| w.iter().zip(phrase).all(|(a, b)| a == b))
}

/// Deterministic extractive compression of `content`.
pub fn compress(content: &str) -> AaakRecord {
    let tokens = words(content);
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in &tokens {
        if !is_stopword(t) {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
    }

    let mut topic_cands: Vec<(&str, usize)> = tf
        .iter()
        .filter(|(w, _)| w.chars().count() >= 3 && !w.chars().all(|c| c.is_ascii_digit()))
        .map(|(w, n)| (*w, *n))
        .collect();
    topic_cands.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let topics = topic_cands
        .into_iter()
        .take(MAX_TOPICS)
        .map(|(w, _)| w.to_string())
        .collect();

    let spans = sentence_spans(content);
    let mut scored: Vec<(usize, f64)> = spans
        .iter()
        .enumerate()
        .map(|(i, &(s, e))| {
            let sum: usize = words(&content[s..e])
                .iter()
                .filter_map(|w| tf.get(w.as_str()))
                .sum();
            let weight = if i == 0 { FIRST_SENTENCE_WEIGHT } else { 1.0 };
            (i, sum as f64 * weight)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut chosen: Vec<usize> = scored.into_iter().take(MAX_KEY_SENTENCES).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    let key_sentences = chosen
        .into_iter()
        .map(|i| {
            let (s, e) = spans[i];
            truncate_chars(&content[s..e], KEY_SENTENCE_MAX_CHARS).to_string()
        })
        .collect();

    let any = |list: &[&str]| tokens.iter().any(|t| list.contains(&t.as_str()));
    let mut emotions = Vec::new();
    let (pos, neg) = (any(POSITIVE), any(NEGATIVE));
    if pos {
        emotions.push(Emotion::Positive);
    }
    if neg {
        emotions.push(Emotion::Negative);
    }
    if !pos && !neg {
        emotions.push(Emotion::Neutral);
    }
    if any(URGENT) {
        emotions.push(Emotion::Urgent);
    }

    let entities: Vec<String> = extract_entities(content, &[]).into_iter().take(MAX_ENTITIES).collect();

    let mut flags = Vec::new();
    if any(TODO) || TODO_PHRASES.iter().any(|p| has_phrase(&tokens, p)) {
        flags.push(Flag::Todo);
    }
    if any(DECISION) || DECISION_PHRASES.iter().any(|p| has_phrase(&tokens, p)) {
        flags.push(Flag::Decision);
    }
    if content.contains('?') {
        flags.push(Flag::Question);
    }
    if content.chars().any(|c| c.is_ascii_digit()) || !entities.is_empty() {
        flags.push(Flag::Fact);
    }

    let mut rec = AaakRecord {
        entities,
        topics,
        key_sentences,
        emotions,
        flags,
        source_drawer_id: None,
    };
    fit_under(&mut rec, content);
    rec
}

/// Compresses drawer content and tags the record with the drawer id.
pub fn compress_drawer(drawer_id: &str, content: &str) -> AaakRecord {
    let mut rec = compress(content);
    rec.source_drawer_id = Some(drawer_id.to_string());
    fit_under(&mut rec, content);
    rec
}

fn fit_under(rec: &mut AaakRecord, content: &str) {
    let limit = content.chars().count();
    if limit <= SHRINK_THRESHOLD_CHARS {
        return;
    }
    while serialize_aaak(rec).chars().count() >= limit {
        if rec.key_sentences.pop().is_some()
            || rec.entities.pop().is_some()
            || rec.topics.pop().is_some()
            || rec.flags.pop().is_some()
            || rec.emotions.pop().is_some()
        {
            continue;
        }
        // Only the drawer id is left and it alone exceeds the source.
        rec.source_drawer_id = None;
        break;
    }
}

fn escape(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            ',' => out.push_str("\\,"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

fn push_list<S: AsRef<str>>(out: &mut String, tag: &str, items: &[S]) {
    out.push('|');
    out.push_str(tag);
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        escape(item.as_ref(), out);
    }
}

pub fn serialize_aaak(rec: &AaakRecord) -> String {
    let mut out = String::from("AAAK");
    push_list(&mut out, "E:", &rec.entities);
    push_list(&mut out, "T:", &rec.topics);
    out.push_str("|K:");
    for (i, s) in rec.key_sentences.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        out.push('"');
        escape(s, &mut out);
        out.push('"');
    }
    let emotions: Vec<&str> = rec.emotions.iter().map(|e| e.as_str()).collect();
    push_list(&mut out, "M:", &emotions);
    let flags: Vec<&str> = rec.flags.iter().map(|f| f.as_str()).collect();
    push_list(&mut out, "F:", &flags);
    if let Some(id) = &rec.source_drawer_id {
        out.push_str("|D:");
        escape(id, &mut out);
    }
    out
}

/// Splits on an unescaped separator, keeping escapes in the pieces.
fn split_unescaped(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == sep {
            parts.push(&s[start..i]);
            start = i + c.len_utf8();
        }
    }
    parts.push(&s[start..]);
    parts
}

fn unescape(s: &str) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(c @ ('\\' | '|' | ',' | '"')) => out.push(c),
            other => {
                return Err(PalaceError::invalid(format!("bad escape sequence \\{other:?} in AAAK line")))
            }
        }
    }
    Ok(out)
}

fn parse_list(raw: &str) -> Result<Vec<String>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    split_unescaped(raw, ',').into_iter().map(unescape).collect()
}

fn parse_sentence(raw: &str) -> Result<String> {
    let inner = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .filter(|inner| !inner.ends_with('\\') || inner.ends_with("\\\\"))
        .ok_or_else(|| PalaceError::invalid(format!("unquoted key sentence {raw:?}")))?;
    unescape(inner)
}

pub fn parse_aaak(line: &str) -> Result<AaakRecord> {
    let segs = split_unescaped(line, '|');
    let mut it = segs.into_iter().peekable();
    if it.next() != Some("AAAK") {
        return Err(PalaceError::invalid("AAAK line must start with `AAAK`"));
    }
    let field = |tag: &str, it: &mut std::iter::Peekable<std::vec::IntoIter<&str>>| {
        it.next()
            .and_then(|s| s.strip_prefix(tag).map(str::to_string))
            .ok_or_else(|| PalaceError::invalid(format!("AAAK line missing `{tag}` section")))
    };
    let entities = parse_list(&field("E:", &mut it)?)?;
    let topics = parse_list(&field("T:", &mut it)?)?;
    let first = field("K:", &mut it)?;
    let mut key_sentences = Vec::new();
    if !first.is_empty() {
        key_sentences.push(parse_sentence(&first)?);
        while it.peek().is_some_and(|s| s.starts_with('"')) {
            key_sentences.push(parse_sentence(it.next().expect("peeked"))?);
        }
    }
    let emotions = parse_list(&field("M:", &mut it)?)?
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let flags = parse_list(&field("F:", &mut it)?)?
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let source_drawer_id = match it.next() {
        None => None,
        Some(seg) => Some(unescape(
            seg.strip_prefix("D:")
                .ok_or_else(|| PalaceError::invalid(format!("unexpected AAAK section {seg:?}")))?,
        )?),
    };
    if let Some(extra) = it.next() {
        return Err(PalaceError::invalid(format!("unexpected AAAK section {extra:?}")));
    }
    Ok(AaakRecord {
        entities,
        topics,
        key_sentences,
        emotions,
        flags,
        source_drawer_id,
    })
}

/// `len(content) / len(serialize_aaak(rec))`, in characters.
pub fn compression_ratio(content: &str, rec: &AaakRecord) -> f64 {
    content.chars().count() as f64 / serialize_aaak(rec).chars().count() as f64
}
