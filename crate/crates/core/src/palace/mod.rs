//! The on-disk palace: drawers, vector index, keyword index, closets,
//! tunnels and the knowledge graph behind one handle.
//!
//! Layout under the palace root:
//!
//! ```text
//! palace.yaml        config
//! drawers.jsonl      put/delete log of drawers (authoritative)
//! index/             vector index snapshot + log
//! tunnels.jsonl      tunnel records
//! knowledge.jsonl    knowledge graph rows
//! diaries/           one JSON-lines file per agent
//! .lock              advisory lock shared by every process using the palace
//! ```
//!
//! Writers hold an exclusive lock on `.lock`, readers a shared one. A
//! handle notices writes made through other handles by watching file sizes
//! and reloads before serving the next call.

mod lock;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, PalaceConfig, ProviderKind, CONFIG_FILE};
use crate::embed::{embed_texts, EmbeddingProvider, EmbeddingVector, HashEmbedder, HttpEmbedder};
use crate::error::{PalaceError, Result};
use crate::ingest::{self, ConvoOptions, MineOptions};
use crate::kgraph::extract::{extract_entities, HEURISTIC_CONFIDENCE};
use crate::kgraph::{KnowledgeGraph, Triple, KG_FILE};
use crate::search::bm25::Bm25Index;
use crate::search::classify::Classifier;
use crate::search::closet::{summary_line, ClosetEntry, ClosetKey};
use crate::search::tunnel::{Tunnel, TUNNELS_FILE};
use crate::stack::PALACE_PROTOCOL;
use crate::timestamp::now_timestamp;
use crate::types::{derive_drawer_id, md5_hex, validate_address, Drawer, DrawerKind, PalaceAddress};
use crate::vindex::persist::PersistentIndex;
use crate::vindex::{IndexMeta, IndexedDrawer};

use lock::FileGate;

pub const DRAWERS_FILE: &str = "drawers.jsonl";
pub const INDEX_DIR: &str = "index";
pub const DIARY_DIR: &str = "diaries";
pub const LOCK_FILE: &str = ".lock";
/// Predicate of triples recorded for entities found in ingested drawers.
pub const MENTION_PREDICATE: &str = "mentioned_in";

const EMBED_BATCH: usize = 64;

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum DrawerRecord {
    Put {
        drawer: Drawer,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        indexed_text: Option<String>,
    },
    Delete {
        id: String,
    },
}

/// A drawer plus the text its index entries were built from, when that
/// differs from the verbatim content.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDrawer {
    pub drawer: Drawer,
    pub indexed_text: Option<String>,
}

impl StoredDrawer {
    pub fn search_text(&self) -> &str {
        self.indexed_text.as_deref().unwrap_or(&self.drawer.content)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddOutcome {
    pub drawer_id: String,
    pub deduplicated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PalaceStatus {
    pub wing_count: usize,
    pub room_count: usize,
    pub drawer_count: usize,
    pub protocol_directive: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub added: usize,
    pub deduplicated: usize,
    pub files_read: usize,
    pub warnings: Vec<String>,
}

impl IngestReport {
    fn absorb(&mut self, outcomes: &[AddOutcome]) {
        for o in outcomes {
            if o.deduplicated {
                self.deduplicated += 1;
            } else {
                self.added += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoomCount {
    pub wing: String,
    pub room: String,
    pub drawers: usize,
}

/// Drawers holding byte-identical content under different addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DedupGroup {
    pub content_md5: String,
    pub drawer_ids: Vec<String>,
}

#[derive(Debug, Default)]
pub(crate) struct Closet {
    pub members: BTreeSet<String>,
    pub summary: String,
}

type Stamp = [u64; 3];

pub(crate) struct State {
    pub drawers: BTreeMap<String, StoredDrawer>,
    pub index: PersistentIndex<f32>,
    pub bm25: Bm25Index,
    pub closets: BTreeMap<ClosetKey, Closet>,
    pub tunnels: Vec<Tunnel>,
    pub kg: KnowledgeGraph,
    stamp: Stamp,
}

fn closet_key(addr: &PalaceAddress) -> Option<ClosetKey> {
    addr.closet.as_ref().map(|c| ClosetKey {
        wing: addr.wing.clone(),
        room: addr.room.clone(),
        closet: c.clone(),
    })
}

fn file_len(path: &Path) -> u64 {
    fs::metadata(path).map_or(0, |m| m.len())
}

fn read_stamp(root: &Path) -> Stamp {
    [
        file_len(&root.join(DRAWERS_FILE)),
        file_len(&root.join(TUNNELS_FILE)),
        file_len(&root.join(KG_FILE)),
    ]
}

/// Reads a JSON-lines file. A final line without a newline that fails to
/// parse is treated as a torn write and skipped.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !complete => {
                tracing::warn!("ignoring torn final line of {}", path.display());
            }
            Err(e) => {
                return Err(PalaceError::Parse {
                    line: i + 1,
                    message: format!("{}: {e}", path.display()),
                })
            }
        }
    }
    Ok(out)
}

fn append_lines(path: &Path, lines: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(lines.as_bytes())?;
    Ok(())
}

fn embed_all(embedder: &dyn EmbeddingProvider, texts: &[&str]) -> Result<Vec<EmbeddingVector<f32>>> {
    let batches: Vec<Vec<EmbeddingVector<f32>>> = texts
        .par_chunks(EMBED_BATCH)
        .map(|chunk| embed_texts(embedder, chunk))
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

impl State {
    fn load(root: &Path, config: &PalaceConfig, embedder: &dyn EmbeddingProvider) -> Result<State> {
        let stamp = read_stamp(root);
        let mut drawers = BTreeMap::new();
        for rec in read_jsonl::<DrawerRecord>(&root.join(DRAWERS_FILE))? {
            match rec {
                DrawerRecord::Put { drawer, indexed_text } => {
                    drawers.insert(drawer.id.clone(), StoredDrawer { drawer, indexed_text });
                }
                DrawerRecord::Delete { id } => {
                    drawers.remove(&id);
                }
            }
        }

        let mut index = PersistentIndex::<f32>::open(
            &root.join(INDEX_DIR),
            config.embedding_dim,
            config.distance_metric,
            config.hnsw,
        )?;
        // The drawer log is written first, so after a crash the index may
        // lag behind it. Bring the in-memory copy in line.
        let stale: Vec<String> = index
            .index()
            .items()
            .filter(|(id, _, _)| !drawers.contains_key(*id))
            .map(|(id, _, _)| id.to_string())
            .collect();
        for id in stale {
            index.index_mut_unlogged().delete(&id);
        }
        let missing: Vec<&StoredDrawer> = drawers
            .values()
            .filter(|d| !index.index().contains(&d.drawer.id))
            .collect();
        if !missing.is_empty() {
            tracing::warn!("re-embedding {} drawers missing from the index", missing.len());
            let texts: Vec<&str> = missing.iter().map(|d| d.search_text()).collect();
            let vectors = embed_all(embedder, &texts)?;
            for (d, v) in missing.iter().zip(vectors) {
                index.index_mut_unlogged().insert(IndexedDrawer {
                    drawer_id: d.drawer.id.clone(),
                    vector: v,
                    metadata: IndexMeta::from(&d.drawer),
                })?;
            }
        }

        let mut bm25 = Bm25Index::new();
        let mut closets: BTreeMap<ClosetKey, Closet> = BTreeMap::new();
        for d in drawers.values() {
            bm25.add(&d.drawer.id, d.search_text());
            if let Some(key) = closet_key(&d.drawer.address) {
                closets.entry(key).or_default().members.insert(d.drawer.id.clone());
            }
        }

        let tunnels = read_jsonl::<Tunnel>(&root.join(TUNNELS_FILE))?;
        let kg = KnowledgeGraph::open(root.join(KG_FILE))?;

        let mut state = State {
            drawers,
            index,
            bm25,
            closets,
            tunnels,
            kg,
            stamp,
        };
        let keys: Vec<ClosetKey> = state.closets.keys().cloned().collect();
        state.refresh_closets(keys);
        Ok(state)
    }

    fn refresh_closets(&mut self, keys: impl IntoIterator<Item = ClosetKey>) {
        for key in keys {
            let Some(closet) = self.closets.get(&key) else {
                continue;
            };
            if closet.members.is_empty() {
                self.closets.remove(&key);
                continue;
            }
            let summary = summary_line(closet.members.iter().map(|id| self.drawers[id].drawer.content.as_str()));
            if let Some(c) = self.closets.get_mut(&key) {
                c.summary = summary;
            }
        }
    }

    pub(crate) fn closet_entries(&self) -> Vec<ClosetEntry> {
        self.closets
            .iter()
            .map(|(key, c)| ClosetEntry {
                closet_id: key.closet_id(),
                summary_line: c.summary.clone(),
                member_drawer_ids: c.members.iter().cloned().collect(),
            })
            .collect()
    }
}

pub struct Palace {
    root: PathBuf,
    config: PalaceConfig,
    embedder: Box<dyn EmbeddingProvider>,
    classifier: Classifier,
    gate: FileGate,
    state: RwLock<State>,
}

impl std::fmt::Debug for Palace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Palace")
            .field("root", &self.root)
            .field("embedder", &self.embedder.name())
            .finish_non_exhaustive()
    }
}

pub fn embedder_for(config: &PalaceConfig) -> Result<Box<dyn EmbeddingProvider>> {
    match config.embedding_provider {
        ProviderKind::Builtin => Ok(Box::new(HashEmbedder::new(config.embedding_dim))),
        ProviderKind::Http => {
            let url = config
                .embedding_url
                .as_deref()
                .ok_or_else(|| PalaceError::Config("embedding_provider http needs embedding_url".into()))?;
            Ok(Box::new(HttpEmbedder::new(url, config.embedding_dim)))
        }
    }
}

impl Palace {
    /// Creates the palace directory and config when absent, then opens it.
    /// An existing config is left untouched.
    pub fn init(path: impl AsRef<Path>, config: Option<PalaceConfig>) -> Result<Palace> {
        let root = path.as_ref();
        fs::create_dir_all(root)?;
        if !root.join(CONFIG_FILE).exists() {
            let mut config = config.unwrap_or_default();
            config.palace_path = root.to_path_buf();
            config.validate()?;
            config.save()?;
        }
        Palace::open(root)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Palace> {
        let config = load_config(path.as_ref())?;
        let embedder = embedder_for(&config)?;
        Palace::open_with_embedder(path, embedder)
    }

    /// Opens an existing palace with a caller-supplied embedding provider.
    pub fn open_with_embedder(path: impl AsRef<Path>, embedder: Box<dyn EmbeddingProvider>) -> Result<Palace> {
        let root = path.as_ref().to_path_buf();
        let config = load_config(&root)?;
        if embedder.dim() != config.embedding_dim {
            return Err(PalaceError::Config(format!(
                "embedder {} produces dimension {}, palace uses {}",
                embedder.name(),
                embedder.dim(),
                config.embedding_dim
            )));
        }
        fs::create_dir_all(root.join(DIARY_DIR))?;
        let gate = FileGate::open(&root.join(LOCK_FILE))?;
        let state = {
            let _x = gate.exclusive()?;
            State::load(&root, &config, embedder.as_ref())?
        };
        Ok(Palace {
            classifier: Classifier::new(&config.room_keywords),
            root,
            config,
            embedder,
            gate,
            state: RwLock::new(state),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &PalaceConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    fn reload(&self, state: &mut State) -> Result<()> {
        tracing::debug!("palace at {} changed on disk, reloading", self.root.display());
        *state = State::load(&self.root, &self.config, self.embedder.as_ref())?;
        Ok(())
    }

    /// Runs `f` under the shared lock on an up-to-date view.
    pub(crate) fn read<R>(&self, f: impl FnOnce(&State) -> Result<R>) -> Result<R> {
        loop {
            {
                let state = self.state.read();
                let _shared = self.gate.shared()?;
                if state.stamp == read_stamp(&self.root) {
                    return f(&state);
                }
            }
            let mut state = self.state.write();
            let _shared = self.gate.shared()?;
            if state.stamp != read_stamp(&self.root) {
                self.reload(&mut state)?;
            }
        }
    }

    /// Runs `f` under the exclusive lock on an up-to-date view.
    pub(crate) fn write<R>(&self, f: impl FnOnce(&mut State) -> Result<R>) -> Result<R> {
        let mut state = self.state.write();
        let _x = self.gate.exclusive()?;
        if state.stamp != read_stamp(&self.root) {
            self.reload(&mut state)?;
        }
        let out = f(&mut state);
        state.stamp = read_stamp(&self.root);
        out
    }

    /// Stores drawers verbatim and indexes them. `indexed_text`, when given,
    /// replaces the content as the text that is embedded and keyword-indexed.
    pub fn add_drawers(&self, items: Vec<(Drawer, Option<String>)>) -> Result<Vec<AddOutcome>> {
        for (d, indexed) in &items {
            validate_address(&d.address)?;
            let expected = derive_drawer_id(&d.address.wing, &d.address.room, &d.content)?;
            if d.id != expected {
                return Err(PalaceError::invalid(format!("drawer id {} does not match its content", d.id)));
            }
            if indexed.as_deref().is_some_and(str::is_empty) {
                return Err(PalaceError::invalid("indexed text must be non-empty"));
            }
        }
        self.write(|st| {
            let mut outcomes = Vec::with_capacity(items.len());
            let mut fresh: Vec<StoredDrawer> = Vec::new();
            let mut batch_ids = HashSet::new();
            for (drawer, indexed_text) in items {
                let dup = st.drawers.contains_key(&drawer.id) || !batch_ids.insert(drawer.id.clone());
                outcomes.push(AddOutcome {
                    drawer_id: drawer.id.clone(),
                    deduplicated: dup,
                });
                if !dup {
                    fresh.push(StoredDrawer { drawer, indexed_text });
                }
            }
            if fresh.is_empty() {
                return Ok(outcomes);
            }

            let texts: Vec<&str> = fresh.iter().map(StoredDrawer::search_text).collect();
            let vectors = embed_all(self.embedder.as_ref(), &texts)?;

            let mut log = String::new();
            for d in &fresh {
                log.push_str(&serde_json::to_string(&DrawerRecord::Put {
                    drawer: d.drawer.clone(),
                    indexed_text: d.indexed_text.clone(),
                })?);
                log.push('\n');
            }
            append_lines(&self.root.join(DRAWERS_FILE), &log)?;

            let mut touched = BTreeSet::new();
            for (d, v) in fresh.into_iter().zip(vectors) {
                st.index.insert(IndexedDrawer {
                    drawer_id: d.drawer.id.clone(),
                    vector: v,
                    metadata: IndexMeta::from(&d.drawer),
                })?;
                st.bm25.add(&d.drawer.id, d.search_text());
                if let Some(key) = closet_key(&d.drawer.address) {
                    st.closets.entry(key.clone()).or_default().members.insert(d.drawer.id.clone());
                    touched.insert(key);
                }
                self.record_mentions(&mut st.kg, &d.drawer)?;
                st.drawers.insert(d.drawer.id.clone(), d);
            }
            st.refresh_closets(touched);
            Ok(outcomes)
        })
    }

    fn record_mentions(&self, kg: &mut KnowledgeGraph, drawer: &Drawer) -> Result<()> {
        let closet = closet_key(&drawer.address).map(|k| k.closet_id());
        for name in extract_entities(&drawer.content, &self.config.entity_keywords) {
            let mut t = Triple::new(name, MENTION_PREDICATE, drawer.id.clone()).confidence(HEURISTIC_CONFIDENCE);
            t.source_file = drawer.source_file.clone();
            t.source_closet = closet.clone();
            kg.add_triple(t)?;
        }
        Ok(())
    }

    pub fn add_drawer(&self, drawer: Drawer, indexed_text: Option<String>) -> Result<AddOutcome> {
        Ok(self.add_drawers(vec![(drawer, indexed_text)])?.remove(0))
    }

    /// Stores `content` verbatim as a manual drawer.
    pub fn remember(&self, content: &str, address: PalaceAddress) -> Result<AddOutcome> {
        let drawer = Drawer::new(content, address, DrawerKind::Manual, now_timestamp())?;
        self.add_drawer(drawer, None)
    }

    /// Mines a project directory using this palace's chunking and room table.
    pub fn mine_project(&self, dir: &Path, wing: Option<String>) -> Result<IngestReport> {
        let opts = MineOptions {
            chunk_size: self.config.chunk_size,
            chunk_overlap: self.config.chunk_overlap,
            wing,
            ..Default::default()
        };
        let outcome = ingest::mine_project(dir, &self.classifier, &opts)?;
        let mut report = IngestReport {
            files_read: outcome.files_read,
            warnings: outcome.warnings,
            ..Default::default()
        };
        let outcomes = self.add_drawers(outcome.drawers.into_iter().map(|d| (d, None)).collect())?;
        report.absorb(&outcomes);
        Ok(report)
    }

    pub fn mine_conversation(&self, export: &str, opts: &ConvoOptions) -> Result<IngestReport> {
        let drawers = ingest::mine_conversation(export, opts, &self.classifier)?;
        let mut report = IngestReport {
            files_read: 1,
            ..Default::default()
        };
        let outcomes = self.add_drawers(drawers.into_iter().map(|d| (d, None)).collect())?;
        report.absorb(&outcomes);
        Ok(report)
    }

    /// Removes a drawer. Returns whether it existed.
    pub fn forget(&self, drawer_id: &str) -> Result<bool> {
        self.write(|st| {
            let Some(old) = st.drawers.remove(drawer_id) else {
                return Ok(false);
            };
            let mut line = serde_json::to_string(&DrawerRecord::Delete { id: drawer_id.to_string() })?;
            line.push('\n');
            append_lines(&self.root.join(DRAWERS_FILE), &line)?;
            st.index.delete(drawer_id)?;
            st.bm25.remove(drawer_id);
            if let Some(key) = closet_key(&old.drawer.address) {
                if let Some(c) = st.closets.get_mut(&key) {
                    c.members.remove(drawer_id);
                }
                st.refresh_closets([key]);
            }
            Ok(true)
        })
    }

    pub fn get(&self, drawer_id: &str) -> Result<Option<Drawer>> {
        self.read(|st| Ok(st.drawers.get(drawer_id).map(|d| d.drawer.clone())))
    }

    pub fn get_stored(&self, drawer_id: &str) -> Result<Option<StoredDrawer>> {
        self.read(|st| Ok(st.drawers.get(drawer_id).cloned()))
    }

    /// All drawers, ordered by id.
    pub fn drawers(&self) -> Result<Vec<Drawer>> {
        self.read(|st| Ok(st.drawers.values().map(|d| d.drawer.clone()).collect()))
    }

    pub fn drawer_count(&self) -> Result<usize> {
        self.read(|st| Ok(st.drawers.len()))
    }

    /// Live vector index size; equals the drawer count unless something is
    /// badly wrong.
    pub fn indexed_count(&self) -> Result<usize> {
        self.read(|st| Ok(st.index.index().len()))
    }

    pub fn wings(&self) -> Result<BTreeMap<String, usize>> {
        self.read(|st| {
            let mut out = BTreeMap::new();
            for d in st.drawers.values() {
                *out.entry(d.drawer.address.wing.clone()).or_insert(0) += 1;
            }
            Ok(out)
        })
    }

    pub fn rooms(&self, wing: Option<&str>) -> Result<Vec<RoomCount>> {
        self.read(|st| {
            let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for d in st.drawers.values() {
                let a = &d.drawer.address;
                if wing.is_none_or(|w| w == a.wing) {
                    *counts.entry((&a.wing, &a.room)).or_insert(0) += 1;
                }
            }
            Ok(counts
                .into_iter()
                .map(|((w, r), n)| RoomCount {
                    wing: w.to_string(),
                    room: r.to_string(),
                    drawers: n,
                })
                .collect())
        })
    }

    pub fn status(&self) -> Result<PalaceStatus> {
        self.read(|st| {
            let wings: BTreeSet<&str> = st.drawers.values().map(|d| d.drawer.address.wing.as_str()).collect();
            let rooms: BTreeSet<(&str, &str)> = st
                .drawers
                .values()
                .map(|d| (d.drawer.address.wing.as_str(), d.drawer.address.room.as_str()))
                .collect();
            Ok(PalaceStatus {
                wing_count: wings.len(),
                room_count: rooms.len(),
                drawer_count: st.drawers.len(),
                protocol_directive: PALACE_PROTOCOL.to_string(),
            })
        })
    }

    pub fn closets(&self) -> Result<Vec<ClosetEntry>> {
        self.read(|st| Ok(st.closet_entries()))
    }

    /// Groups of drawers whose content is byte-identical. Read-only.
    pub fn dedup_report(&self) -> Result<Vec<DedupGroup>> {
        self.read(|st| {
            let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
            for d in st.drawers.values() {
                groups
                    .entry(md5_hex(d.drawer.content.as_bytes()))
                    .or_default()
                    .push(d.drawer.id.clone());
            }
            Ok(groups
                .into_iter()
                .filter(|(_, ids)| ids.len() > 1)
                .map(|(content_md5, drawer_ids)| DedupGroup { content_md5, drawer_ids })
                .collect())
        })
    }

    /// Adds a directed tunnel. Returns `false` when it already exists.
    pub fn add_tunnel(&self, from: &str, to: &str, label: &str) -> Result<bool> {
        if from == to {
            return Err(PalaceError::invalid("a tunnel needs two distinct drawers"));
        }
        self.write(|st| {
            for id in [from, to] {
                if !st.drawers.contains_key(id) {
                    return Err(PalaceError::NotFound(format!("drawer {id}")));
                }
            }
            if st.tunnels.iter().any(|t| t.from_drawer_id == from && t.to_drawer_id == to) {
                return Ok(false);
            }
            let tunnel = Tunnel {
                from_drawer_id: from.to_string(),
                to_drawer_id: to.to_string(),
                label: label.to_string(),
                created_at: now_timestamp(),
            };
            let mut line = serde_json::to_string(&tunnel)?;
            line.push('\n');
            append_lines(&self.root.join(TUNNELS_FILE), &line)?;
            st.tunnels.push(tunnel);
            Ok(true)
        })
    }

    /// Drawers one tunnel away in either direction, ordered by id.
    pub fn follow_tunnels(&self, drawer_id: &str) -> Result<Vec<Drawer>> {
        self.read(|st| {
            if !st.drawers.contains_key(drawer_id) {
                return Err(PalaceError::NotFound(format!("drawer {drawer_id}")));
            }
            let mut ids = BTreeSet::new();
            for t in &st.tunnels {
                if t.from_drawer_id == drawer_id {
                    ids.insert(t.to_drawer_id.as_str());
                } else if t.to_drawer_id == drawer_id {
                    ids.insert(t.from_drawer_id.as_str());
                }
            }
            Ok(ids
                .into_iter()
                .filter_map(|id| st.drawers.get(id).map(|d| d.drawer.clone()))
                .collect())
        })
    }

    pub fn tunnels(&self) -> Result<Vec<Tunnel>> {
        self.read(|st| Ok(st.tunnels.clone()))
    }

    /// Read access to the knowledge graph.
    pub fn with_kg<R>(&self, f: impl FnOnce(&KnowledgeGraph) -> Result<R>) -> Result<R> {
        self.read(|st| f(&st.kg))
    }

    /// Write access to the knowledge graph; changes are persisted as made.
    pub fn with_kg_mut<R>(&self, f: impl FnOnce(&mut KnowledgeGraph) -> Result<R>) -> Result<R> {
        self.write(|st| f(&mut st.kg))
    }
}

/// True when `path` holds a palace config.
pub fn palace_exists(path: &Path) -> bool {
    path.join(CONFIG_FILE).is_file()
}

/// Lines of a JSON-lines file, for diaries and similar append-only logs.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let f = File::open(path)?;
    BufReader::new(f).lines().map(|l| l.map_err(PalaceError::from)).collect()
}
