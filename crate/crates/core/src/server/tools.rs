//! Tool descriptors and their handlers.

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{PalaceError, Result};
use crate::kgraph::Triple;
use crate::palace::Palace;
use crate::search::{SearchMode, SearchRequest};
use crate::stack::diary::{diary_append, diary_read};
use crate::timestamp::parse_timestamp;
use crate::types::PalaceAddress;

const IDENT: &str = "^[a-z0-9_]+$";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

fn ident(description: &str) -> Value {
    json!({"type": "string", "pattern": IDENT, "description": description})
}

fn text(description: &str) -> Value {
    json!({"type": "string", "minLength": 1, "description": description})
}

fn object(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false
    })
}

pub fn descriptors() -> Vec<ToolDescriptor> {
    vec![
        ToolDescriptor {
            name: "recall",
            description: "Hybrid semantic + keyword search over stored memories. Returns verbatim drawer content.",
            input_schema: object(
                json!({
                    "query": text("What to look for"),
                    "wing": ident("Restrict to one wing"),
                    "room": ident("Restrict to one room"),
                    "n_results": {"type": "integer", "minimum": 1, "maximum": 100},
                    "mode": {"type": "string", "enum": ["semantic", "keyword", "hybrid"]}
                }),
                &["query"],
            ),
        },
        ToolDescriptor {
            name: "remember",
            description: "Store a memory verbatim at a wing/room address.",
            input_schema: object(
                json!({
                    "content": text("Text to store exactly as given"),
                    "wing": ident("Wing identifier"),
                    "room": ident("Room identifier"),
                    "hall": ident("Optional hall"),
                    "closet": ident("Optional closet")
                }),
                &["content", "wing", "room"],
            ),
        },
        ToolDescriptor {
            name: "rooms",
            description: "List rooms with drawer counts, optionally within one wing.",
            input_schema: object(json!({"wing": ident("Wing to list")}), &[]),
        },
        ToolDescriptor {
            name: "wings",
            description: "List wings with drawer counts.",
            input_schema: object(json!({}), &[]),
        },
        ToolDescriptor {
            name: "palace_status",
            description: "Palace counts and the memory protocol to follow.",
            input_schema: object(json!({}), &[]),
        },
        ToolDescriptor {
            name: "kg_add",
            description: "Add a subject-predicate-object fact with optional validity interval.",
            input_schema: object(
                json!({
                    "subject": text("Entity name"),
                    "predicate": text("Relation"),
                    "object": text("Value or entity"),
                    "valid_from": text("ISO-8601 start (inclusive)"),
                    "valid_to": text("ISO-8601 end (exclusive)"),
                    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                    "source_closet": {"type": "string"},
                    "source_file": {"type": "string"}
                }),
                &["subject", "predicate", "object"],
            ),
        },
        ToolDescriptor {
            name: "kg_query",
            description: "Facts about a subject or with a predicate, optionally as of a point in time.",
            input_schema: object(
                json!({
                    "subject": text("Entity name"),
                    "predicate": text("Relation"),
                    "at_time": text("ISO-8601 instant")
                }),
                &[],
            ),
        },
        ToolDescriptor {
            name: "diary_append",
            description: "Append an entry to an agent's diary.",
            input_schema: object(
                json!({
                    "agent_id": ident("Agent identifier"),
                    "session_id": {"type": "string"},
                    "text": text("Entry text")
                }),
                &["agent_id", "session_id", "text"],
            ),
        },
        ToolDescriptor {
            name: "diary_read",
            description: "Read the most recent diary entries of an agent, oldest first.",
            input_schema: object(
                json!({
                    "agent_id": ident("Agent identifier"),
                    "last_n": {"type": "integer", "minimum": 1, "maximum": 1000}
                }),
                &["agent_id"],
            ),
        },
        ToolDescriptor {
            name: "forget",
            description: "Delete one drawer by id.",
            input_schema: object(json!({"drawer_id": text("Drawer id")}), &["drawer_id"]),
        },
    ]
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn req_str<'a>(args: &'a Map<String, Value>, key: &str) -> Result<&'a str> {
    str_arg(args, key).ok_or_else(|| PalaceError::invalid(format!("missing `{key}`")))
}

fn to_value<T: Serialize>(v: T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

/// Runs a tool whose arguments already passed its schema.
pub fn call(palace: &Palace, name: &str, args: &Map<String, Value>) -> Result<Value> {
    match name {
        "recall" => {
            let mut req = SearchRequest::new(req_str(args, "query")?);
            req.wing = str_arg(args, "wing").map(str::to_string);
            req.room = str_arg(args, "room").map(str::to_string);
            if let Some(n) = args.get("n_results").and_then(Value::as_f64) {
                req.n_results = n as usize;
            }
            if let Some(mode) = str_arg(args, "mode") {
                req.mode = mode.parse::<SearchMode>()?;
            }
            let results = palace.search(&req)?;
            Ok(json!({"results": results}))
        }
        "remember" => {
            let mut addr = PalaceAddress::new(req_str(args, "wing")?, req_str(args, "room")?)?;
            if let Some(h) = str_arg(args, "hall") {
                addr = addr.with_hall(h)?;
            }
            if let Some(c) = str_arg(args, "closet") {
                addr = addr.with_closet(c)?;
            }
            to_value(palace.remember(req_str(args, "content")?, addr)?)
        }
        "rooms" => Ok(json!({"rooms": palace.rooms(str_arg(args, "wing"))?})),
        "wings" => Ok(json!({"wings": palace.wings()?})),
        "palace_status" => to_value(palace.status()?),
        "kg_add" => {
            let mut t = Triple::new(
                req_str(args, "subject")?,
                req_str(args, "predicate")?,
                req_str(args, "object")?,
            );
            t.valid_from = str_arg(args, "valid_from").map(str::to_string);
            t.valid_to = str_arg(args, "valid_to").map(str::to_string);
            if let Some(c) = args.get("confidence").and_then(Value::as_f64) {
                t.confidence = c;
            }
            t.source_closet = str_arg(args, "source_closet").map(str::to_string);
            t.source_file = str_arg(args, "source_file").map(str::to_string);
            let (added, triple_id) = palace.with_kg_mut(|kg| kg.insert_triple(t))?;
            Ok(json!({"added": added, "triple_id": triple_id}))
        }
        "kg_query" => {
            let subject = str_arg(args, "subject");
            let predicate = str_arg(args, "predicate");
            if subject.is_none() && predicate.is_none() {
                return Err(PalaceError::invalid("kg_query needs `subject` or `predicate`"));
            }
            let at = str_arg(args, "at_time").map(parse_timestamp).transpose()?;
            let triples = palace.with_kg(|kg| {
                let found = match subject {
                    Some(s) => kg.query_by_subject(s, at),
                    None => kg.query_by_predicate(predicate.unwrap_or_default()),
                };
                Ok(found
                    .into_iter()
                    .filter(|t| predicate.is_none_or(|p| t.predicate == p))
                    .filter(|t| at.is_none_or(|at| t.valid_at(at)))
                    .collect::<Vec<_>>())
            })?;
            Ok(json!({"triples": triples}))
        }
        "diary_append" => to_value(diary_append(
            palace,
            req_str(args, "agent_id")?,
            req_str(args, "session_id")?,
            req_str(args, "text")?,
        )?),
        "diary_read" => {
            let n = args.get("last_n").and_then(Value::as_f64).map_or(10, |n| n as usize);
            Ok(json!({"entries": diary_read(palace, req_str(args, "agent_id")?, n)?}))
        }
        "forget" => Ok(json!({"forgotten": palace.forget(req_str(args, "drawer_id")?)?})),
        other => Err(PalaceError::NotFound(format!("tool {other}"))),
    }
}
