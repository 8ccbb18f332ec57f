//! On-disk form of the vector index: a full graph snapshot plus an
//! append-only operation log replayed on open.
//!
//! Both files start with an 8-byte magic and a format version. All integers
//! are little-endian. Compatibility across format versions is not promised.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{HnswParams, IndexMeta, IndexedDrawer, Node, VectorIndex};
use crate::embed::DistanceMetric;
use crate::error::{PalaceError, Result};
use crate::scalar::Scalar;

const SNAPSHOT_MAGIC: &[u8; 8] = b"PLCVSNAP";
const LOG_MAGIC: &[u8; 8] = b"PLCVOLOG";
const FORMAT_VERSION: u32 = 1;

pub const SNAPSHOT_FILE: &str = "snapshot.bin";
pub const LOG_FILE: &str = "log.bin";

/// Log records accumulated before a fresh snapshot is written.
pub const DEFAULT_SNAPSHOT_EVERY: usize = 2048;

const OP_INSERT: u8 = 1;
const OP_DELETE: u8 = 2;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Reader { buf, pos: 0, path }
    }

    fn corrupt(&self, message: impl Into<String>) -> PalaceError {
        PalaceError::CorruptIndex {
            path: self.path.to_path_buf(),
            message: format!("{} (at byte {})", message.into(), self.pos),
        }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.corrupt("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| self.corrupt("invalid utf-8"))
    }

    fn meta(&mut self) -> Result<IndexMeta> {
        let b = self.bytes()?;
        serde_json::from_slice(b).map_err(|e| self.corrupt(format!("bad metadata: {e}")))
    }

    fn vector<T: Scalar>(&mut self, dim: usize) -> Result<Vec<T>> {
        let raw = self.take(dim * T::BYTES)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        if self.take(8)? != magic {
            return Err(self.corrupt("bad magic"));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(self.corrupt(format!("unsupported format version {version}")));
        }
        Ok(())
    }
}

fn metric_code(m: DistanceMetric) -> u8 {
    match m {
        DistanceMetric::Cosine => 0,
        DistanceMetric::L2 => 1,
    }
}

fn metric_from_code(c: u8) -> Option<DistanceMetric> {
    match c {
        0 => Some(DistanceMetric::Cosine),
        1 => Some(DistanceMetric::L2),
        _ => None,
    }
}

fn meta_json(meta: &IndexMeta) -> Vec<u8> {
    serde_json::to_vec(meta).expect("index metadata serializes")
}

impl<T: Scalar> VectorIndex<T> {
    fn encode_snapshot(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.vectors.len() * T::BYTES);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.push(T::BYTES as u8);
        out.push(metric_code(self.metric));
        put_u32(&mut out, self.dim as u32);
        put_u32(&mut out, self.params.m as u32);
        put_u32(&mut out, self.params.ef_construction as u32);
        put_u32(&mut out, self.params.ef_search as u32);
        put_u64(&mut out, self.params.seed);
        put_u64(&mut out, self.draws);
        put_u32(&mut out, self.entry.map_or(u32::MAX, |e| e));
        put_u32(&mut out, self.nodes.len() as u32);
        for (i, node) in self.nodes.iter().enumerate() {
            put_bytes(&mut out, node.id.as_bytes());
            put_bytes(&mut out, &meta_json(&node.meta));
            out.push(u8::from(node.deleted));
            out.push(node.level as u8);
            for &x in self.vector(i as u32) {
                x.write_le(&mut out);
            }
            for layer in &node.links {
                put_u32(&mut out, layer.len() as u32);
                for &n in layer {
                    put_u32(&mut out, n);
                }
            }
        }
        out
    }

    fn decode_snapshot(buf: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader::new(buf, path);
        r.header(SNAPSHOT_MAGIC)?;
        let width = r.u8()? as usize;
        if width != T::BYTES {
            return Err(r.corrupt(format!("scalar width {width}, expected {}", T::BYTES)));
        }
        let metric = metric_from_code(r.u8()?).ok_or_else(|| r.corrupt("unknown metric"))?;
        let dim = r.u32()? as usize;
        let params = HnswParams {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            seed: r.u64()?,
        };
        let mut index = VectorIndex::new(dim, metric, params)?;
        index.draws = r.u64()?;
        let entry = r.u32()?;
        let count = r.u32()? as usize;
        index.entry = (entry != u32::MAX).then_some(entry);
        let mut by_id = HashMap::with_capacity(count);
        for i in 0..count {
            let id = r.string()?;
            let meta = r.meta()?;
            let deleted = r.u8()? != 0;
            let level = r.u8()? as usize;
            index.vectors.extend(r.vector::<T>(dim)?);
            let mut links = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let n = r.u32()? as usize;
                let mut layer = Vec::with_capacity(n);
                for _ in 0..n {
                    let target = r.u32()?;
                    if target as usize >= count {
                        return Err(r.corrupt("neighbor out of range"));
                    }
                    layer.push(target);
                }
                links.push(layer);
            }
            if deleted {
                index.tombstones += 1;
            } else {
                by_id.insert(id.clone(), i as u32);
            }
            index.nodes.push(Node {
                id,
                meta,
                level,
                links,
                deleted,
            });
        }
        if let Some(e) = index.entry {
            if e as usize >= count {
                return Err(r.corrupt("entry point out of range"));
            }
        }
        if r.remaining() != 0 {
            return Err(r.corrupt("trailing bytes"));
        }
        index.by_id = by_id;
        Ok(index)
    }

    /// Applies every complete record of an operation log. A truncated final
    /// record (interrupted write) is dropped; returns the number applied and
    /// the byte length of the valid prefix.
    fn replay_log(&mut self, buf: &[u8], path: &Path) -> Result<(usize, usize)> {
        let mut r = Reader::new(buf, path);
        r.header(LOG_MAGIC)?;
        let width = r.u8()? as usize;
        let dim = r.u32()? as usize;
        if width != T::BYTES || dim != self.dim {
            return Err(r.corrupt("log does not match index layout"));
        }
        let mut applied = 0;
        loop {
            let valid = r.pos;
            if r.remaining() == 0 {
                return Ok((applied, valid));
            }
            if r.remaining() < 4 {
                tracing::warn!("dropping truncated record at end of {}", path.display());
                return Ok((applied, valid));
            }
            let len = r.u32()? as usize;
            if r.remaining() < len {
                tracing::warn!("dropping truncated record at end of {}", path.display());
                return Ok((applied, valid));
            }
            let payload = r.take(len)?;
            let mut rec = Reader::new(payload, path);
            match rec.u8()? {
                OP_INSERT => {
                    let drawer_id = rec.string()?;
                    let metadata = rec.meta()?;
                    let vector = crate::embed::EmbeddingVector::new(rec.vector::<T>(self.dim)?)?;
                    self.insert(IndexedDrawer {
                        drawer_id,
                        vector,
                        metadata,
                    })?;
                }
                OP_DELETE => {
                    let id = rec.string()?;
                    self.delete(&id);
                }
                op => return Err(rec.corrupt(format!("unknown log op {op}"))),
            }
            applied += 1;
        }
    }
}

fn log_header<T: Scalar>(dim: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(17);
    out.extend_from_slice(LOG_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    out.push(T::BYTES as u8);
    put_u32(&mut out, dim as u32);
    out
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A [`VectorIndex`] mirrored to `<dir>/snapshot.bin` and `<dir>/log.bin`.
pub struct PersistentIndex<T: Scalar> {
    index: VectorIndex<T>,
    dir: PathBuf,
    log: File,
    log_records: usize,
    snapshot_every: usize,
}

impl<T: Scalar> PersistentIndex<T> {
    /// Opens or creates the index under `dir`. The stored layout must agree
    /// with `dim` and `metric`.
    pub fn open(dir: &Path, dim: usize, metric: DistanceMetric, params: HnswParams) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let log_path = dir.join(LOG_FILE);

        let mut index = if snap_path.exists() {
            let idx = VectorIndex::<T>::decode_snapshot(&fs::read(&snap_path)?, &snap_path)?;
            if idx.dim() != dim || idx.metric() != metric {
                return Err(PalaceError::Config(format!(
                    "index at {} was built with dim {} / {}, config asks for dim {dim} / {metric}",
                    dir.display(),
                    idx.dim(),
                    idx.metric()
                )));
            }
            idx
        } else {
            VectorIndex::new(dim, metric, params)?
        };

        let mut log_records = 0;
        if log_path.exists() {
            let buf = fs::read(&log_path)?;
            if buf.is_empty() {
                write_atomic(&log_path, &log_header::<T>(dim))?;
            } else {
                let (applied, valid) = index.replay_log(&buf, &log_path)?;
                log_records = applied;
                if valid < buf.len() {
                    let f = OpenOptions::new().write(true).open(&log_path)?;
                    f.set_len(valid as u64)?;
                }
            }
        } else {
            write_atomic(&log_path, &log_header::<T>(dim))?;
        }
        let log = OpenOptions::new().append(true).open(&log_path)?;
        Ok(PersistentIndex {
            index,
            dir: dir.to_path_buf(),
            log,
            log_records,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        })
    }

    pub fn index(&self) -> &VectorIndex<T> {
        &self.index
    }

    pub fn index_mut_unlogged(&mut self) -> &mut VectorIndex<T> {
        &mut self.index
    }

    pub fn set_snapshot_every(&mut self, n: usize) {
        self.snapshot_every = n.max(1);
    }

    pub fn log_records(&self) -> usize {
        self.log_records
    }

    fn append(&mut self, payload: &[u8]) -> Result<()> {
        let mut rec = Vec::with_capacity(payload.len() + 4);
        put_u32(&mut rec, payload.len() as u32);
        rec.extend_from_slice(payload);
        self.log.write_all(&rec)?;
        self.log_records += 1;
        if self.log_records >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(())
    }

    pub fn insert(&mut self, item: IndexedDrawer<T>) -> Result<bool> {
        let mut payload = vec![OP_INSERT];
        put_bytes(&mut payload, item.drawer_id.as_bytes());
        put_bytes(&mut payload, &meta_json(&item.metadata));
        for &x in item.vector.as_slice() {
            x.write_le(&mut payload);
        }
        let added = self.index.insert(item)?;
        if added {
            self.append(&payload)?;
        }
        Ok(added)
    }

    pub fn delete(&mut self, drawer_id: &str) -> Result<bool> {
        let existed = self.index.delete(drawer_id);
        if existed {
            let mut payload = vec![OP_DELETE];
            put_bytes(&mut payload, drawer_id.as_bytes());
            self.append(&payload)?;
        }
        Ok(existed)
    }

    /// Writes a full snapshot and resets the log.
    pub fn snapshot(&mut self) -> Result<()> {
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &self.index.encode_snapshot())?;
        let log_path = self.dir.join(LOG_FILE);
        write_atomic(&log_path, &log_header::<T>(self.index.dim()))?;
        self.log = OpenOptions::new().append(true).open(&log_path)?;
        self.log_records = 0;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbeddingVector;
    use crate::types::DrawerKind;
    use crate::vindex::WhereFilter;

    fn meta(wing: &str) -> IndexMeta {
        IndexMeta {
            wing: wing.into(),
            room: "r".into(),
            hall: None,
            closet: Some("c".into()),
            source_file: None,
            timestamp: "2026-01-01T00:00:00Z".into(),
            kind: DrawerKind::Manual,
        }
    }

    fn vec_for(i: usize) -> EmbeddingVector<f32> {
        let v: Vec<f32> = (0..8).map(|j| ((i * 31 + j * 7) % 13) as f32 - 6.0).collect();
        EmbeddingVector::normalized(v).unwrap()
    }

    fn populate(idx: &mut PersistentIndex<f32>, n: usize) {
        for i in 0..n {
            idx.insert(IndexedDrawer {
                drawer_id: format!("d{i}"),
                vector: vec_for(i),
                metadata: meta(if i % 2 == 0 { "even" } else { "odd" }),
            })
            .unwrap();
        }
    }

    fn all_results(idx: &VectorIndex<f32>) -> Vec<Vec<super::super::Hit>> {
        (0..5)
            .map(|i| idx.query_hnsw(&vec_for(i * 3), 10, &WhereFilter::default(), 30).unwrap())
            .collect()
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let before = {
            let mut idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
            populate(&mut idx, 40);
            idx.delete("d3").unwrap();
            all_results(idx.index())
        };
        let idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        assert_eq!(idx.index().len(), 39);
        assert!(!idx.index().contains("d3"));
        assert_eq!(all_results(idx.index()), before);
    }

    #[test]
    fn snapshot_plus_log_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let before = {
            let mut idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::L2, HnswParams::default()).unwrap();
            idx.set_snapshot_every(16);
            populate(&mut idx, 50);
            assert!(idx.log_records() < 16);
            all_results(idx.index())
        };
        let idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::L2, HnswParams::default()).unwrap();
        assert_eq!(idx.index().len(), 50);
        assert_eq!(idx.index().metadata("d7").unwrap().closet.as_deref(), Some("c"));
        assert_eq!(all_results(idx.index()), before);
    }

    #[test]
    fn truncated_log_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
            populate(&mut idx, 5);
        }
        let log = dir.path().join(LOG_FILE);
        let len = fs::metadata(&log).unwrap().len();
        OpenOptions::new().write(true).open(&log).unwrap().set_len(len - 3).unwrap();
        let mut idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        assert_eq!(idx.index().len(), 4);
        populate(&mut idx, 6);
        drop(idx);
        let idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        assert_eq!(idx.index().len(), 6);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut idx = PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()).unwrap();
            populate(&mut idx, 3);
            idx.snapshot().unwrap();
        }
        assert!(PersistentIndex::<f32>::open(dir.path(), 16, DistanceMetric::Cosine, HnswParams::default()).is_err());
        assert!(PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::L2, HnswParams::default()).is_err());
        assert!(matches!(
            PersistentIndex::<f64>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()),
            Err(PalaceError::CorruptIndex { .. })
        ));
    }

    #[test]
    fn garbage_snapshot_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(SNAPSHOT_FILE), b"not an index").unwrap();
        assert!(matches!(
            PersistentIndex::<f32>::open(dir.path(), 8, DistanceMetric::Cosine, HnswParams::default()),
            Err(PalaceError::CorruptIndex { .. })
        ));
    }
}
