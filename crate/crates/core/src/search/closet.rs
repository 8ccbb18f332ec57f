//! Closets: compact pointer lines over drawers that share a closet address.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::aaak::compress;
use crate::text::{is_stopword, truncate_chars, words};

pub const SUMMARY_MAX_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClosetKey {
    pub wing: String,
    pub room: String,
    pub closet: String,
}

impl ClosetKey {
    /// `wing/room/closet`.
    pub fn closet_id(&self) -> String {
        format!("{}/{}/{}", self.wing, self.room, self.closet)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosetEntry {
    pub closet_id: String,
    pub summary_line: String,
    pub member_drawer_ids: Vec<String>,
}

/// One line built from the leading key sentence of each member, joined by
/// ` / ` and cut at [`SUMMARY_MAX_CHARS`].
pub fn summary_line<'a>(member_contents: impl IntoIterator<Item = &'a str>) -> String {
    let parts: Vec<String> = member_contents
        .into_iter()
        .filter_map(|c| compress(c).key_sentences.into_iter().next())
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect();
    truncate_chars(&parts.join(" / "), SUMMARY_MAX_CHARS).to_string()
}

/// True when a non-stopword query term occurs in the summary.
pub fn summary_matches(summary: &str, query_terms: &[String]) -> bool {
    let tokens: BTreeSet<String> = words(summary).into_iter().collect();
    query_terms.iter().any(|q| !is_stopword(q) && tokens.contains(q))
}
