//! Heuristic entity extraction: capitalized spans plus configured names.

use crate::text::{is_stopword, sentence_spans};

/// Confidence attached to triples derived from heuristic extraction.
pub const HEURISTIC_CONFIDENCE: f64 = 0.5;

struct Token<'a> {
    text: &'a str,
    sentence_start: bool,
    /// Punctuation after the word ends any span running through it.
    breaks_after: bool,
}

fn tokens(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    for (s, e) in sentence_spans(text) {
        let mut first = true;
        for raw in text[s..e].split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            if word.is_empty() {
                if let Some(prev) = out.last_mut() {
                    let prev: &mut Token = prev;
                    prev.breaks_after = true;
                }
                continue;
            }
            let trailing = raw.len() - raw.trim_end_matches(|c: char| !c.is_alphanumeric()).len();
            out.push(Token {
                text: word,
                sentence_start: first,
                breaks_after: trailing > 0,
            });
            first = false;
        }
        if let Some(last) = out.last_mut() {
            last.breaks_after = true;
        }
    }
    out
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase) && word != "I"
}

/// Entity names in order of first appearance, deduplicated.
///
/// A run of two or more capitalized words is an entity. A single
/// capitalized word counts only away from the start of a sentence and when
/// it is not a stopword. Any of `keywords` found case-insensitively is
/// reported with its configured spelling.
pub fn extract_entities(text: &str, keywords: &[String]) -> Vec<String> {
    let toks = tokens(text);
    let mut found: Vec<(usize, String)> = Vec::new();

    let mut i = 0;
    while i < toks.len() {
        if !is_capitalized(toks[i].text) {
            i += 1;
            continue;
        }
        let start = i;
        while !toks[i].breaks_after && i + 1 < toks.len() && is_capitalized(toks[i + 1].text) {
            i += 1;
        }
        let mut run = &toks[start..=i];
        // "Then Kubernetes" at a sentence start: the first word is only
        // capitalized because of its position.
        if run.len() > 1 && run[0].sentence_start && is_stopword(&run[0].text.to_lowercase()) {
            run = &run[1..];
        }
        let single = run.len() == 1;
        let keep = !single
            || (!run[0].sentence_start && !is_stopword(&run[0].text.to_lowercase()));
        if keep {
            let name = run.iter().map(|t| t.text).collect::<Vec<_>>().join(" ");
            found.push((start + (i + 1 - start - run.len()), name));
        }
        i += 1;
    }

    let lowered: Vec<String> = toks.iter().map(|t| t.text.to_lowercase()).collect();
    for kw in keywords {
        let parts: Vec<String> = kw.split_whitespace().map(str::to_lowercase).collect();
        if parts.is_empty() || parts.len() > lowered.len() {
            continue;
        }
        if let Some(pos) = lowered.windows(parts.len()).position(|w| w == parts.as_slice()) {
            found.push((pos, kw.clone()));
        }
    }

    found.sort_by_key(|(pos, _)| *pos);
    let mut seen = std::collections::HashSet::new();
    found
        .into_iter()
        .filter(|(_, n)| seen.insert(n.to_lowercase()))
        .map(|(_, n)| n)
        .collect()
}
