//! Rule-based wing/room assignment used at ingest.

use std::collections::BTreeMap;
use std::path::{Component, Path};

use crate::text::words;
use crate::types::{sanitize_identifier, PalaceAddress};

pub const FALLBACK_WING: &str = "general";
pub const FALLBACK_ROOM: &str = "misc";

/// Wing from the top-level source directory, room from a keyword table.
#[derive(Debug, Clone, Default)]
pub struct Classifier {
    /// room -> lowercase keyword token sequences
    rooms: BTreeMap<String, Vec<Vec<String>>>,
}

impl Classifier {
    pub fn new(room_keywords: &BTreeMap<String, Vec<String>>) -> Self {
        let rooms = room_keywords
            .iter()
            .map(|(room, kws)| {
                let seqs = kws.iter().map(|k| words(k)).filter(|s| !s.is_empty()).collect();
                (room.clone(), seqs)
            })
            .collect();
        Classifier { rooms }
    }

    pub fn classify_address(&self, text: &str, source_path: Option<&Path>) -> PalaceAddress {
        PalaceAddress {
            wing: source_path.and_then(wing_for_path).unwrap_or_else(|| FALLBACK_WING.into()),
            room: self.classify_room(text),
            hall: None,
            closet: None,
        }
    }

    /// Room whose keywords occur most often in `text`; ties go to the
    /// lexicographically smaller room, no hits to `misc`.
    pub fn classify_room(&self, text: &str) -> String {
        if self.rooms.is_empty() {
            return FALLBACK_ROOM.into();
        }
        let tokens = words(text);
        let mut best: Option<(&str, usize)> = None;
        for (room, seqs) in &self.rooms {
            let tf: usize = seqs.iter().map(|s| count_occurrences(&tokens, s)).sum();
            if tf > 0 && best.is_none_or(|(_, b)| tf > b) {
                best = Some((room, tf));
            }
        }
        best.map_or_else(|| FALLBACK_ROOM.into(), |(r, _)| r.to_string())
    }
}

fn count_occurrences(tokens: &[String], seq: &[String]) -> usize {
    if seq.len() > tokens.len() {
        return 0;
    }
    tokens.windows(seq.len()).filter(|w| *w == seq).count()
}

/// First directory component of a relative path; files at the root have
/// no wing.
fn wing_for_path(path: &Path) -> Option<String> {
    let dirs: Vec<_> = path
        .parent()?
        .components()
        .filter_map(|c| match c {
            Component::Normal(s) => Some(s.to_string_lossy().into_owned()),
            _ => None,
        })
        .collect();
    dirs.first().and_then(|d| sanitize_identifier(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_fallbacks() {
        let c = Classifier::default();
        let a = c.classify_address("anything", Some(Path::new("backend/auth.py")));
        assert_eq!((a.wing.as_str(), a.room.as_str()), ("backend", "misc"));
        assert_eq!(c.classify_address("x", None).wing, "general");
        assert_eq!(c.classify_address("x", Some(Path::new("README.md"))).wing, "general");
        assert_eq!(
            c.classify_address("x", Some(Path::new("Front End/src/app.ts"))).wing,
            "front_end"
        );
    }

    #[test]
    fn keyword_table_picks_room() {
        let mut table = BTreeMap::new();
        table.insert("billing".to_string(), vec!["invoice".to_string()]);
        table.insert("auth".to_string(), vec!["login".to_string(), "access token".to_string()]);
        let c = Classifier::new(&table);
        assert_eq!(c.classify_room("Invoice 12: the invoice was paid, invoice closed. login"), "billing");
        assert_eq!(c.classify_room("the access token expired after login"), "auth");
        assert_eq!(c.classify_room("nothing relevant"), "misc");
        // tie -> smaller name
        assert_eq!(c.classify_room("invoice login"), "auth");
    }
}
