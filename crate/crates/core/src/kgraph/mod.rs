//! Temporal triple store with single-hop lookups.
//!
//! Two logical tables, `entities` and `triples`, persisted as one JSON-lines
//! file. Each line is `{"table": ..., "row": {...}}`; on load the last row
//! written for an id wins, so updates are plain appends.

pub mod extract;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{PalaceError, Result};
use crate::timestamp::{now_timestamp, parse_timestamp};
use crate::types::md5_hex;

pub const KG_FILE: &str = "knowledge.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    /// Opaque JSON object text.
    pub properties: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub valid_from: Option<String>,
    pub valid_to: Option<String>,
    pub confidence: f64,
    pub source_closet: Option<String>,
    pub source_file: Option<String>,
    pub extracted_at: String,
}

impl Triple {
    /// Open-ended triple with confidence 1. The id is assigned by
    /// [`KnowledgeGraph::add_triple`].
    pub fn new(subject: impl Into<String>, predicate: impl Into<String>, object: impl Into<String>) -> Self {
        Triple {
            id: String::new(),
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            valid_from: None,
            valid_to: None,
            confidence: 1.0,
            source_closet: None,
            source_file: None,
            extracted_at: String::new(),
        }
    }

    pub fn valid_from(mut self, ts: impl Into<String>) -> Self {
        self.valid_from = Some(ts.into());
        self
    }

    pub fn valid_to(mut self, ts: impl Into<String>) -> Self {
        self.valid_to = Some(ts.into());
        self
    }

    pub fn confidence(mut self, c: f64) -> Self {
        self.confidence = c;
        self
    }

    fn dedup_key(&self) -> DedupKey {
        (
            self.subject.clone(),
            self.predicate.clone(),
            self.object.clone(),
            self.valid_from.clone(),
            self.valid_to.clone(),
        )
    }

    /// Whether the triple holds at `t` under `[valid_from, valid_to)`.
    pub fn valid_at(&self, t: DateTime<Utc>) -> bool {
        let from_ok = self
            .valid_from
            .as_deref()
            .is_none_or(|f| parse_timestamp(f).is_ok_and(|f| f <= t));
        let to_ok = self
            .valid_to
            .as_deref()
            .is_none_or(|v| parse_timestamp(v).is_ok_and(|v| v > t));
        from_ok && to_ok
    }
}

type DedupKey = (String, String, String, Option<String>, Option<String>);

pub fn triple_id(subject: &str, predicate: &str, object: &str, valid_from: Option<&str>, valid_to: Option<&str>) -> String {
    let key = [subject, predicate, object, valid_from.unwrap_or(""), valid_to.unwrap_or("")].join("\u{1f}");
    format!("triple_{}", &md5_hex(key.as_bytes())[..16])
}

pub fn entity_id(name: &str) -> String {
    format!("entity_{}", &md5_hex(name.to_lowercase().as_bytes())[..12])
}

fn check_interval(from: Option<&str>, to: Option<&str>) -> Result<()> {
    let from = from.map(parse_timestamp).transpose()?;
    let to = to.map(parse_timestamp).transpose()?;
    if let (Some(f), Some(t)) = (from, to) {
        if f > t {
            return Err(PalaceError::invalid("valid_from is after valid_to"));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "table", content = "row", rename_all = "snake_case")]
enum Row {
    Entities(Entity),
    Triples(Triple),
}

#[derive(Debug, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<String, Entity>,
    triples: Vec<Triple>,
    by_id: HashMap<String, usize>,
    keys: HashMap<DedupKey, usize>,
    file: Option<PathBuf>,
}

impl KnowledgeGraph {
    /// In-memory store.
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens or creates the store file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut kg = KnowledgeGraph::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: Row = serde_json::from_str(&line).map_err(|e| PalaceError::Parse {
                    line: i + 1,
                    message: format!("{}: {e}", path.display()),
                })?;
                kg.apply(row);
            }
        }
        kg.file = Some(path);
        Ok(kg)
    }

    fn apply(&mut self, row: Row) {
        match row {
            Row::Entities(e) => {
                self.entities.insert(e.id.clone(), e);
            }
            Row::Triples(t) => match self.by_id.get(&t.id) {
                Some(&i) => {
                    self.keys.remove(&self.triples[i].dedup_key());
                    self.keys.insert(t.dedup_key(), i);
                    self.triples[i] = t;
                }
                None => {
                    let i = self.triples.len();
                    self.by_id.insert(t.id.clone(), i);
                    self.keys.insert(t.dedup_key(), i);
                    self.triples.push(t);
                }
            },
        }
    }

    fn persist(&self, row: &Row) -> Result<()> {
        let Some(path) = &self.file else {
            return Ok(());
        };
        let mut line = serde_json::to_string(row)?;
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        f.write_all(line.as_bytes())?;
        Ok(())
    }

    fn write(&mut self, row: Row) -> Result<()> {
        self.persist(&row)?;
        self.apply(row);
        Ok(())
    }

    /// Inserts or replaces the entity named `name`, returning its id.
    pub fn upsert_entity(&mut self, name: &str, entity_type: &str, properties: Option<&str>) -> Result<String> {
        if name.trim().is_empty() {
            return Err(PalaceError::invalid("entity name must be non-empty"));
        }
        let properties = properties.unwrap_or("{}");
        match serde_json::from_str::<serde_json::Value>(properties) {
            Ok(serde_json::Value::Object(_)) => {}
            _ => return Err(PalaceError::invalid("entity properties must be a JSON object")),
        }
        let id = entity_id(name);
        let created_at = self
            .entities
            .get(&id)
            .map_or_else(now_timestamp, |e| e.created_at.clone());
        self.write(Row::Entities(Entity {
            id: id.clone(),
            name: name.to_string(),
            entity_type: entity_type.to_string(),
            properties: properties.to_string(),
            created_at,
        }))?;
        Ok(id)
    }

    pub fn entity(&self, name: &str) -> Option<&Entity> {
        self.entities.get(&entity_id(name))
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// Stores `t` unless a triple with the same subject, predicate, object
    /// and interval already exists. The id is derived from those fields and
    /// an empty `extracted_at` is stamped with the current time.
    pub fn add_triple(&mut self, t: Triple) -> Result<bool> {
        self.insert_triple(t).map(|(added, _)| added)
    }

    /// [`add_triple`](Self::add_triple) that also returns the id of the new
    /// triple, or of the existing one it duplicates.
    pub fn insert_triple(&mut self, mut t: Triple) -> Result<(bool, String)> {
        if !(0.0..=1.0).contains(&t.confidence) {
            return Err(PalaceError::invalid(format!("confidence {} outside [0, 1]", t.confidence)));
        }
        if t.subject.is_empty() || t.predicate.is_empty() {
            return Err(PalaceError::invalid("subject and predicate must be non-empty"));
        }
        check_interval(t.valid_from.as_deref(), t.valid_to.as_deref())?;
        if let Some(&i) = self.keys.get(&t.dedup_key()) {
            return Ok((false, self.triples[i].id.clone()));
        }
        let base = triple_id(&t.subject, &t.predicate, &t.object, t.valid_from.as_deref(), t.valid_to.as_deref());
        // A closed triple keeps its original id, so a fresh triple can hash
        // onto an id already in use.
        let mut id = base.clone();
        let mut n = 1;
        while self.by_id.contains_key(&id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        t.id = id;
        if t.extracted_at.is_empty() {
            t.extracted_at = now_timestamp();
        }
        if self.entity(&t.subject).is_none() {
            self.upsert_entity(&t.subject, "unknown", None)?;
        }
        let id = t.id.clone();
        self.write(Row::Triples(t))?;
        Ok((true, id))
    }

    pub fn get(&self, triple_id: &str) -> Option<&Triple> {
        self.by_id.get(triple_id).map(|&i| &self.triples[i])
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn query_by_subject(&self, subject: &str, at_time: Option<DateTime<Utc>>) -> Vec<Triple> {
        self.triples
            .iter()
            .filter(|t| t.subject == subject && at_time.is_none_or(|at| t.valid_at(at)))
            .cloned()
            .collect()
    }

    pub fn query_by_predicate(&self, predicate: &str) -> Vec<Triple> {
        self.triples.iter().filter(|t| t.predicate == predicate).cloned().collect()
    }

    /// Ends the validity of a triple at `valid_to` without deleting it.
    pub fn close_validity(&mut self, triple_id: &str, valid_to: &str) -> Result<()> {
        let mut t = self
            .get(triple_id)
            .cloned()
            .ok_or_else(|| PalaceError::NotFound(format!("triple {triple_id}")))?;
        let end = parse_timestamp(valid_to)?;
        if let Some(from) = &t.valid_from {
            if parse_timestamp(from)? > end {
                return Err(PalaceError::invalid("valid_to precedes valid_from"));
            }
        }
        t.valid_to = Some(valid_to.to_string());
        let key = t.dedup_key();
        if self.keys.get(&key).is_some_and(|&i| self.triples[i].id != triple_id) {
            return Err(PalaceError::invalid("an identical closed triple already exists"));
        }
        self.write(Row::Triples(t))
    }

    /// One JSON object per triple, in insertion order.
    pub fn dump_triples(&self) -> Result<String> {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&serde_json::to_string(t)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Adds every triple of a dump through [`add_triple`](Self::add_triple);
    /// returns how many were new.
    pub fn load_triples(&mut self, jsonl: &str) -> Result<usize> {
        let mut added = 0;
        for (i, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let t: Triple = serde_json::from_str(line).map_err(|e| PalaceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            added += usize::from(self.add_triple(t)?);
        }
        Ok(added)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(s: &str) -> Option<DateTime<Utc>> {
        Some(parse_timestamp(s).unwrap())
    }

    #[test]
    fn exact_dedup() {
        let mut kg = KnowledgeGraph::new();
        assert!(kg.add_triple(Triple::new("max", "loves", "chess")).unwrap());
        assert!(!kg.add_triple(Triple::new("max", "loves", "chess")).unwrap());
        assert_eq!(kg.len(), 1);
    }

    #[test]
    fn contradictions_are_both_stored() {
        let mut kg = KnowledgeGraph::new();
        assert!(kg.add_triple(Triple::new("max", "loves", "chess")).unwrap());
        assert!(kg.add_triple(Triple::new("max", "hates", "chess")).unwrap());
        assert_eq!(kg.query_by_subject("max", None).len(), 2);
    }

    #[test]
    fn invalid_inputs() {
        let mut kg = KnowledgeGraph::new();
        assert!(matches!(
            kg.add_triple(Triple::new("a", "b", "c").confidence(1.5)),
            Err(PalaceError::InvalidInput(_))
        ));
        assert!(matches!(
            kg.add_triple(Triple::new("a", "b", "c").valid_from("2026-06-01").valid_to("2026-01-01")),
            Err(PalaceError::InvalidInput(_))
        ));
        assert!(kg.is_empty());
    }

    #[test]
    fn half_open_interval() {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple(Triple::new("max", "works_at", "acme").valid_from("2026-01-01").valid_to("2026-06-01"))
            .unwrap();
        assert_eq!(kg.query_by_subject("max", at("2026-03-01")).len(), 1);
        assert!(kg.query_by_subject("max", at("2026-06-01")).is_empty());
        assert_eq!(kg.query_by_subject("max", at("2026-01-01")).len(), 1);
        assert!(kg.query_by_subject("nobody", None).is_empty());
    }

    #[test]
    fn predicate_queries() {
        let mut kg = KnowledgeGraph::new();
        assert!(kg.query_by_predicate("works_at").is_empty());
        for (s, p, o) in [
            ("a", "works_at", "x"),
            ("b", "works_at", "y"),
            ("a", "loves", "z"),
            ("c", "Loves", "z"),
            ("d", "knows", "a"),
        ] {
            kg.add_triple(Triple::new(s, p, o)).unwrap();
        }
        assert_eq!(kg.query_by_predicate("works_at").len(), 2);
        assert_eq!(kg.query_by_predicate("loves").len(), 1);
    }

    #[test]
    fn close_validity_supersedes() {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple(Triple::new("max", "lives_in", "berlin").valid_from("2025-01-01")).unwrap();
        let id = kg.triples()[0].id.clone();
        kg.close_validity(&id, "2026-02-01").unwrap();
        assert!(kg.query_by_subject("max", at("2026-02-01")).is_empty());
        assert_eq!(kg.query_by_subject("max", at("2026-01-31")).len(), 1);
        assert!(matches!(kg.close_validity(&id, "2024-01-01"), Err(PalaceError::InvalidInput(_))));
        assert!(matches!(kg.close_validity("triple_nope", "2026-01-01"), Err(PalaceError::NotFound(_))));
    }

    #[test]
    fn reopened_fact_gets_fresh_id() {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple(Triple::new("max", "likes", "tea")).unwrap();
        let first = kg.triples()[0].id.clone();
        kg.close_validity(&first, "2026-01-01").unwrap();
        assert!(kg.add_triple(Triple::new("max", "likes", "tea")).unwrap());
        assert_eq!(kg.len(), 2);
        assert_ne!(kg.triples()[1].id, first);
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(KG_FILE);
        {
            let mut kg = KnowledgeGraph::open(&path).unwrap();
            kg.add_triple(Triple::new("Ada", "wrote", "notes").valid_from("1843-01-01")).unwrap();
            kg.add_triple(Triple::new("Ada", "knew", "Babbage")).unwrap();
            let id = kg.triples()[1].id.clone();
            kg.close_validity(&id, "1871-10-18").unwrap();
            kg.upsert_entity("Babbage", "person", Some(r#"{"born":1791}"#)).unwrap();
        }
        let kg = KnowledgeGraph::open(&path).unwrap();
        assert_eq!(kg.len(), 2);
        assert_eq!(kg.triples()[1].valid_to.as_deref(), Some("1871-10-18"));
        assert_eq!(kg.entity("babbage").unwrap().entity_type, "person");
        assert_eq!(kg.entity("Ada").unwrap().entity_type, "unknown");
    }

    #[test]
    fn column_names_in_dump() {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple(Triple::new("a", "b", "c")).unwrap();
        let line = kg.dump_triples().unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            [
                "confidence", "extracted_at", "id", "object", "predicate", "source_closet",
                "source_file", "subject", "valid_from", "valid_to"
            ]
        );
    }

    #[test]
    fn dump_load() {
        let mut kg = KnowledgeGraph::new();
        kg.add_triple(Triple::new("a", "b", "c").valid_from("2026-01-01")).unwrap();
        kg.add_triple(Triple::new("a", "d", "e").confidence(0.5)).unwrap();
        let dump = kg.dump_triples().unwrap();
        let mut other = KnowledgeGraph::new();
        assert_eq!(other.load_triples(&dump).unwrap(), 2);
        assert_eq!(other.load_triples(&dump).unwrap(), 0);
        assert_eq!(other.triples(), kg.triples());
    }

    fn day(d: u32) -> String {
        let base = parse_timestamp("2026-01-01").unwrap();
        crate::timestamp::format_timestamp(base + chrono::Duration::days(i64::from(d)))
    }

    fn triple_strategy() -> impl Strategy<Value = Triple> {
        (0..3u8, 0..3u8, 0..3u8, prop::option::of(0..60u32), prop::option::of(0..60u32)).prop_map(
            |(s, p, o, a, b)| {
                let mut t = Triple::new(format!("s{s}"), format!("p{p}"), format!("o{o}"));
                let (a, b) = match (a, b) {
                    (Some(a), Some(b)) => (Some(a.min(b)), Some(a.max(b))),
                    other => other,
                };
                t.valid_from = a.map(day);
                t.valid_to = b.map(day);
                t
            },
        )
    }

    proptest! {
        #[test]
        fn temporal_soundness(ts in prop::collection::vec(triple_strategy(), 0..40), probe in 0..70u32, subj in 0..3u8) {
            let mut kg = KnowledgeGraph::new();
            for t in &ts {
                kg.add_triple(t.clone()).unwrap();
            }
            let at = parse_timestamp(&day(probe)).unwrap();
            let subject = format!("s{subj}");
            let got: Vec<String> = kg.query_by_subject(&subject, Some(at)).into_iter().map(|t| t.id).collect();
            let want: Vec<String> = kg
                .triples()
                .iter()
                .filter(|t| {
                    t.subject == subject
                        && t.valid_from.as_ref().is_none_or(|f| parse_timestamp(f).unwrap() <= at)
                        && t.valid_to.as_ref().is_none_or(|v| parse_timestamp(v).unwrap() > at)
                })
                .map(|t| t.id.clone())
                .collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn replay_is_idempotent(ts in prop::collection::vec(triple_strategy(), 0..30)) {
            let mut once = KnowledgeGraph::new();
            let mut twice = KnowledgeGraph::new();
            for t in &ts {
                once.add_triple(t.clone()).unwrap();
            }
            for t in ts.iter().chain(ts.iter()) {
                twice.add_triple(t.clone()).unwrap();
            }
            let strip = |kg: &KnowledgeGraph| -> Vec<(String, DedupKey)> {
                kg.triples().iter().map(|t| (t.id.clone(), t.dedup_key())).collect()
            };
            prop_assert_eq!(strip(&once), strip(&twice));
        }
    }
}
