//! Append-only per-agent diaries, one JSON-lines file per agent.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PalaceError, Result};
use crate::palace::{read_lines, Palace, DIARY_DIR};
use crate::timestamp::{now_timestamp, parse_timestamp};
use crate::types::is_identifier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiaryEntry {
    pub agent_id: String,
    pub session_id: String,
    pub text: String,
    pub created_at: String,
}

fn diary_path(root: &Path, agent_id: &str) -> Result<PathBuf> {
    if !is_identifier(agent_id) {
        return Err(PalaceError::AddressInvalid {
            field: "agent_id",
            value: agent_id.to_string(),
        });
    }
    Ok(root.join(DIARY_DIR).join(format!("{agent_id}.jsonl")))
}

pub fn diary_append(palace: &Palace, agent_id: &str, session_id: &str, text: &str) -> Result<DiaryEntry> {
    let path = diary_path(palace.path(), agent_id)?;
    fs::create_dir_all(path.parent().expect("diary dir"))?;
    let entry = DiaryEntry {
        agent_id: agent_id.to_string(),
        session_id: session_id.to_string(),
        text: text.to_string(),
        created_at: now_timestamp(),
    };
    let mut line = serde_json::to_string(&entry)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    // Serializes appenders across threads and processes.
    f.lock()?;
    let res = f.write_all(line.as_bytes());
    let _ = f.unlock();
    res?;
    Ok(entry)
}

/// The most recent `last_n` entries, oldest first.
pub fn diary_read(palace: &Palace, agent_id: &str, last_n: usize) -> Result<Vec<DiaryEntry>> {
    let path = diary_path(palace.path(), agent_id)?;
    let mut entries = Vec::new();
    for (i, line) in read_lines(&path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: DiaryEntry = serde_json::from_str(line).map_err(|e| PalaceError::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        entries.push(e);
    }
    // Stable: equal timestamps keep file (insertion) order.
    entries.sort_by_key(|e| parse_timestamp(&e.created_at).ok());
    let skip = entries.len().saturating_sub(last_n);
    Ok(entries.split_off(skip))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let p = Palace::init(dir.path(), None).unwrap();
        assert!(diary_read(&p, "scout", 5).unwrap().is_empty());
        for t in ["first", "second", "third\nwith | odd \"chars\""] {
            diary_append(&p, "scout", "s1", t).unwrap();
        }
        let got = diary_read(&p, "scout", 2).unwrap();
        let texts: Vec<&str> = got.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts, ["second", "third\nwith | odd \"chars\""]);
        assert_eq!(diary_read(&p, "scout", 10).unwrap().len(), 3);
        assert!(diary_read(&p, "scout", 0).unwrap().is_empty());
        assert!(diary_append(&p, "Bad Agent", "s", "x").is_err());
    }

    #[test]
    fn concurrent_appends_all_land() {
        let dir = tempfile::tempdir().unwrap();
        let p = Palace::init(dir.path(), None).unwrap();
        std::thread::scope(|s| {
            for t in 0..4 {
                let p = &p;
                s.spawn(move || {
                    for i in 0..25 {
                        diary_append(p, "busy", "s", &format!("{t}-{i}")).unwrap();
                    }
                });
            }
        });
        assert_eq!(diary_read(&p, "busy", 1000).unwrap().len(), 100);
    }
}
