//! Zero-inference ingestion: project files become overlapping character
//! chunks, conversation exports become one drawer per user/assistant
//! exchange. Nothing here talks to a network or a model.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use globset::{Glob, GlobSet, GlobSetBuilder};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PalaceError, Result};
use crate::search::classify::Classifier;
use crate::timestamp::{format_timestamp, now_timestamp, parse_timestamp};
use crate::types::{Drawer, DrawerKind, PalaceAddress};

pub const DEFAULT_INCLUDE: &[&str] = &[
    "*.md", "*.txt", "*.py", "*.rs", "*.go", "*.ts", "*.yaml", "*.json", "*.toml",
];

/// A span of a source text, in Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    pub start_offset: usize,
    pub end_offset: usize,
}

/// Number of chunks `chunk_text` produces for a text of `len` chars.
pub fn expected_chunk_count(len: usize, chunk_size: usize, overlap: usize) -> usize {
    if len == 0 {
        0
    } else if len <= chunk_size {
        1
    } else {
        1 + (len - chunk_size).div_ceil(chunk_size - overlap)
    }
}

/// Fixed-window chunking: chunk `i` covers
/// `[i*(size-overlap), min(i*(size-overlap)+size, len))`.
pub fn chunk_text(text: &str, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>> {
    if text.is_empty() {
        return Err(PalaceError::invalid("cannot chunk empty text"));
    }
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(PalaceError::invalid(format!(
            "overlap ({overlap}) must be smaller than chunk_size ({chunk_size})"
        )));
    }
    // byte offset of every char, plus the end sentinel
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let len = bounds.len() - 1;
    let step = chunk_size - overlap;

    let mut chunks = Vec::with_capacity(expected_chunk_count(len, chunk_size, overlap));
    let mut start = 0;
    loop {
        let end = (start + chunk_size).min(len);
        chunks.push(Chunk {
            text: text[bounds[start]..bounds[end]].to_string(),
            start_offset: start,
            end_offset: end,
        });
        if end == len {
            break;
        }
        start += step;
    }
    Ok(chunks)
}

/// Line endings to `\n`, trailing whitespace stripped per line, and any run
/// of more than two newlines collapsed to exactly two.
pub fn normalize(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut newline_run = 0;
    for (i, line) in unified.split('\n').enumerate() {
        if i > 0 {
            newline_run += 1;
            if newline_run <= 2 {
                out.push('\n');
            }
        }
        let line = line.trim_end();
        if !line.is_empty() {
            newline_run = 0;
            out.push_str(line);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub user_turn: String,
    pub assistant_turn: String,
    pub session_id: String,
    pub turn_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<String>,
}

impl Exchange {
    /// The verbatim drawer text for this exchange.
    pub fn content(&self) -> String {
        format!("USER: {}\nASSISTANT: {}", self.user_turn, self.assistant_turn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One line of a conversation export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRecord {
    pub session_id: String,
    pub role: Role,
    pub content: String,
    pub ts: String,
}

/// Parses a JSON-lines conversation export into exchanges, grouped by
/// session in order of first appearance.
pub fn parse_conversation(export: &str) -> Result<Vec<Exchange>> {
    struct SessionState {
        pending_user: Option<(String, String)>,
        pending_line: usize,
        next_index: u32,
        exchanges: Vec<Exchange>,
    }

    let mut order: Vec<String> = Vec::new();
    let mut sessions: HashMap<String, SessionState> = HashMap::new();

    for (idx, line) in export.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TurnRecord = serde_json::from_str(line).map_err(|e| PalaceError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let parse_err = |message: String| PalaceError::Parse { line: line_no, message };
        if rec.session_id.is_empty() {
            return Err(parse_err("empty session_id".into()));
        }
        if rec.content.is_empty() {
            return Err(parse_err(format!("empty {:?} turn", rec.role)));
        }
        parse_timestamp(&rec.ts).map_err(|e| parse_err(e.to_string()))?;

        let state = sessions.entry(rec.session_id.clone()).or_insert_with(|| {
            order.push(rec.session_id.clone());
            SessionState {
                pending_user: None,
                pending_line: 0,
                next_index: 0,
                exchanges: Vec::new(),
            }
        });
        match rec.role {
            Role::User => {
                if state.pending_user.is_some() {
                    return Err(parse_err(format!(
                        "user turn follows unanswered user turn from line {}",
                        state.pending_line
                    )));
                }
                state.pending_user = Some((rec.content, rec.ts));
                state.pending_line = line_no;
            }
            Role::Assistant => {
                let (user_turn, ts) = state
                    .pending_user
                    .take()
                    .ok_or_else(|| parse_err("assistant turn without preceding user turn".into()))?;
                state.exchanges.push(Exchange {
                    user_turn,
                    assistant_turn: rec.content,
                    session_id: rec.session_id,
                    turn_index: state.next_index,
                    ts: Some(ts),
                });
                state.next_index += 1;
            }
        }
    }

    let mut out = Vec::new();
    for id in order {
        let state = sessions.remove(&id).expect("session recorded in order");
        if state.pending_user.is_some() {
            return Err(PalaceError::Parse {
                line: state.pending_line,
                message: format!("user turn in session {id:?} has no assistant reply"),
            });
        }
        out.extend(state.exchanges);
    }
    Ok(out)
}

/// Renders exchanges back into the JSON-lines export format.
pub fn exchanges_to_export(exchanges: &[Exchange]) -> String {
    let mut out = String::new();
    for ex in exchanges {
        let ts = ex.ts.clone().unwrap_or_else(now_timestamp);
        for (role, content) in [(Role::User, &ex.user_turn), (Role::Assistant, &ex.assistant_turn)] {
            let rec = TurnRecord {
                session_id: ex.session_id.clone(),
                role,
                content: content.clone(),
                ts: ts.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("turn record serializes"));
            out.push('\n');
        }
    }
    out
}

/// Drawer for one exchange. Oversized exchanges are kept whole.
pub fn exchange_drawer(ex: &Exchange, address: PalaceAddress) -> Result<Drawer> {
    let ts = ex.ts.clone().unwrap_or_else(now_timestamp);
    let mut drawer = Drawer::new(ex.content(), address, DrawerKind::ConvoExchange, ts)?;
    drawer.session_id = Some(ex.session_id.clone());
    drawer.turn_index = Some(ex.turn_index);
    Ok(drawer)
}

fn dedup_by_id(drawers: impl IntoIterator<Item = Drawer>) -> Vec<Drawer> {
    let mut seen = HashSet::new();
    drawers
        .into_iter()
        .filter(|d| seen.insert(d.id.clone()))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct ConvoOptions {
    pub wing: Option<String>,
    /// Fixed room; when absent each exchange is classified by content.
    pub room: Option<String>,
}

pub const DEFAULT_CONVO_WING: &str = "conversations";

/// One drawer per exchange of a JSON-lines export.
pub fn mine_conversation(
    export: &str,
    opts: &ConvoOptions,
    classifier: &Classifier,
) -> Result<Vec<Drawer>> {
    let exchanges = parse_conversation(export)?;
    let wing = opts.wing.clone().unwrap_or_else(|| DEFAULT_CONVO_WING.into());
    let drawers = exchanges
        .iter()
        .map(|ex| {
            let room = match &opts.room {
                Some(room) => room.clone(),
                None => classifier.classify_room(&ex.content()),
            };
            exchange_drawer(ex, PalaceAddress::new(wing.clone(), room)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dedup_by_id(drawers))
}

#[derive(Debug, Clone)]
pub struct MineOptions {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub include: Vec<String>,
    /// Overrides the classifier's wing.
    pub wing: Option<String>,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions {
            chunk_size: crate::config::DEFAULT_CHUNK_SIZE,
            chunk_overlap: crate::config::DEFAULT_CHUNK_OVERLAP,
            include: DEFAULT_INCLUDE.iter().map(|s| s.to_string()).collect(),
            wing: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MineOutcome {
    pub drawers: Vec<Drawer>,
    pub files_read: usize,
    /// Files that could not be read; mining continues past them.
    pub warnings: Vec<String>,
}

fn build_globs(patterns: &[String]) -> Result<GlobSet> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        builder.add(Glob::new(p).map_err(|e| PalaceError::invalid(format!("bad glob {p:?}: {e}")))?);
    }
    builder
        .build()
        .map_err(|e| PalaceError::invalid(format!("bad include globs: {e}")))
}

fn relative_display(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Chunks every included text file under `dir` into drawers.
pub fn mine_project(dir: &Path, classifier: &Classifier, opts: &MineOptions) -> Result<MineOutcome> {
    if !dir.is_dir() {
        return Err(PalaceError::NotFound(format!("directory {}", dir.display())));
    }
    let globs = build_globs(&opts.include)?;
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'))
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && globs.is_match(e.file_name()))
        .map(|e| e.into_path())
        .collect();
    files.sort();

    let per_file: Vec<std::result::Result<Vec<Drawer>, String>> = files
        .par_iter()
        .map(|path| mine_file(dir, path, classifier, opts))
        .collect();

    let mut outcome = MineOutcome::default();
    let mut drawers = Vec::new();
    for res in per_file {
        match res {
            Ok(ds) => {
                outcome.files_read += 1;
                drawers.extend(ds);
            }
            Err(warning) => {
                tracing::warn!("{warning}");
                outcome.warnings.push(warning);
            }
        }
    }
    outcome.drawers = dedup_by_id(drawers);
    Ok(outcome)
}

fn mine_file(
    root: &Path,
    path: &Path,
    classifier: &Classifier,
    opts: &MineOptions,
) -> std::result::Result<Vec<Drawer>, String> {
    let raw = fs::read_to_string(path).map_err(|e| format!("skipping {}: {e}", path.display()))?;
    let text = normalize(&raw);
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let rel = path.strip_prefix(root).unwrap_or(path);
    let mut address = classifier.classify_address(&text, Some(rel));
    if let Some(wing) = &opts.wing {
        address.wing = wing.clone();
    }
    let timestamp = fs::metadata(path)
        .and_then(|m| m.modified())
        .map(|t| format_timestamp(DateTime::<Utc>::from(t)))
        .unwrap_or_else(|_| now_timestamp());
    let source = relative_display(rel);

    let chunks = chunk_text(&text, opts.chunk_size, opts.chunk_overlap).map_err(|e| e.to_string())?;
    chunks
        .into_iter()
        .map(|c| {
            Drawer::new(c.text, address.clone(), DrawerKind::ProjectChunk, timestamp.clone())
                .map(|d| d.with_source_file(source.clone()))
                .map_err(|e| format!("skipping {}: {e}", path.display()))
        })
        .collect()
}
