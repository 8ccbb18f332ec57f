//! Flat vector index over every drawer in a palace.
//!
//! Two query paths share one store: [`VectorIndex::query_exact`] scans
//! every item and is the ground truth; [`VectorIndex::query_hnsw`] walks a
//! Hierarchical Navigable Small World graph. Metadata filters are applied
//! after graph search, widening `ef` until enough items pass the filter.
//!
//! Stored vectors are unit length, so both metrics rank by one key, the
//! cosine distance `c`, and l2 reports `sqrt(2c)`. Orderings under the two
//! metrics are therefore identical bit for bit, ties included.

mod hnsw;
pub mod persist;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embed::{DistanceMetric, EmbeddingVector};
use crate::error::{PalaceError, Result};
use crate::scalar::Scalar;
use crate::types::{Drawer, DrawerKind};

pub use persist::PersistentIndex;

/// Filtered HNSW queries widen `ef` by doubling, up to this multiple.
pub const MAX_EF_EXPANSION: usize = 8;

/// Tombstones above this fraction of all nodes trigger a rebuild.
pub const REBUILD_TOMBSTONE_FRACTION: f64 = 0.25;

/// Below this many filter-matching items, [`VectorIndex::query`] scans
/// instead of walking the graph.
pub const DEFAULT_EXACT_THRESHOLD: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswParams {
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 42,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(PalaceError::invalid("hnsw m must be at least 2"));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(PalaceError::invalid("hnsw ef values must be positive"));
        }
        Ok(())
    }
}

/// Metadata carried by every indexed item; wing and room are always set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub wing: String,
    pub room: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hall: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closet: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    pub timestamp: String,
    pub kind: DrawerKind,
}

impl From<&Drawer> for IndexMeta {
    fn from(d: &Drawer) -> Self {
        IndexMeta {
            wing: d.address.wing.clone(),
            room: d.address.room.clone(),
            hall: d.address.hall.clone(),
            closet: d.address.closet.clone(),
            source_file: d.source_file.clone(),
            timestamp: d.timestamp.clone(),
            kind: d.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexedDrawer<T> {
    pub drawer_id: String,
    pub vector: EmbeddingVector<T>,
    pub metadata: IndexMeta,
}

/// Equality constraints on wing, room and hall. Empty matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WhereFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hall: Option<String>,
}

impl WhereFilter {
    pub fn build(wing: Option<&str>, room: Option<&str>) -> Self {
        WhereFilter {
            wing: wing.map(str::to_string),
            room: room.map(str::to_string),
            hall: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.wing.is_none() && self.room.is_none() && self.hall.is_none()
    }

    pub fn matches(&self, meta: &IndexMeta) -> bool {
        fn eq(want: &Option<String>, have: Option<&String>) -> bool {
            want.as_ref().is_none_or(|w| have == Some(w))
        }
        eq(&self.wing, Some(&meta.wing))
            && eq(&self.room, Some(&meta.room))
            && eq(&self.hall, meta.hall.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub drawer_id: String,
    pub distance: f64,
}

pub(crate) struct Node {
    pub id: String,
    pub meta: IndexMeta,
    pub level: usize,
    /// Neighbor lists per layer, `links[0]` is the base layer.
    pub links: Vec<Vec<u32>>,
    pub deleted: bool,
}

pub struct VectorIndex<T: Scalar> {
    dim: usize,
    metric: DistanceMetric,
    params: HnswParams,
    exact_threshold: usize,
    /// Row-major, `dim` components per node.
    vectors: Vec<T>,
    nodes: Vec<Node>,
    by_id: HashMap<String, u32>,
    entry: Option<u32>,
    /// Number of levels drawn so far; drives the counter-based level RNG.
    draws: u64,
    tombstones: usize,
}

impl<T: Scalar> VectorIndex<T> {
    pub fn new(dim: usize, metric: DistanceMetric, params: HnswParams) -> Result<Self> {
        if dim == 0 {
            return Err(PalaceError::invalid("index dimension must be positive"));
        }
        params.validate()?;
        Ok(VectorIndex {
            dim,
            metric,
            params,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            vectors: Vec::new(),
            nodes: Vec::new(),
            by_id: HashMap::new(),
            entry: None,
            draws: 0,
            tombstones: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn set_exact_threshold(&mut self, n: usize) {
        self.exact_threshold = n;
    }

    /// Live (not deleted) item count.
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn tombstones(&self) -> usize {
        self.tombstones
    }

    pub fn contains(&self, drawer_id: &str) -> bool {
        self.by_id.contains_key(drawer_id)
    }

    pub fn metadata(&self, drawer_id: &str) -> Option<&IndexMeta> {
        self.by_id.get(drawer_id).map(|&n| &self.nodes[n as usize].meta)
    }

    /// Stored vector of a live item.
    pub fn vector_of(&self, drawer_id: &str) -> Option<&[T]> {
        self.by_id.get(drawer_id).map(|&n| self.vector(n))
    }

    pub(crate) fn vector(&self, node: u32) -> &[T] {
        let start = node as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    /// Ranking key between `query` and a stored node.
    #[inline]
    pub(crate) fn dist_to(&self, query: &[T], node: u32) -> f64 {
        DistanceMetric::Cosine.eval(query, self.vector(node))
    }

    /// Distance in the configured metric for a ranking key.
    #[inline]
    fn reported(&self, key: f64) -> f64 {
        match self.metric {
            DistanceMetric::Cosine => key,
            DistanceMetric::L2 => (2.0 * key).max(0.0).sqrt(),
        }
    }

    /// Distance from `query` to a live item in the configured metric.
    pub fn distance(&self, query: &[T], drawer_id: &str) -> Option<f64> {
        let &n = self.by_id.get(drawer_id)?;
        (query.len() == self.dim).then(|| self.reported(self.dist_to(query, n)))
    }

    /// Sorts `(key, node)` pairs by key then drawer id and keeps `k`.
    fn finish(&self, mut scored: Vec<(f64, u32)>, k: usize) -> Vec<Hit> {
        scored.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| self.nodes[a.1 as usize].id.cmp(&self.nodes[b.1 as usize].id))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(key, n)| Hit {
                drawer_id: self.nodes[n as usize].id.clone(),
                distance: self.reported(key),
            })
            .collect()
    }

    /// Adds an item. Returns `false` (and changes nothing) when the id is
    /// already live.
    pub fn insert(&mut self, item: IndexedDrawer<T>) -> Result<bool> {
        if item.vector.dim() != self.dim {
            return Err(PalaceError::invalid(format!(
                "vector dimension {} does not match index dimension {}",
                item.vector.dim(),
                self.dim
            )));
        }
        if !item.vector.is_unit() {
            return Err(PalaceError::invalid(format!(
                "vector for {} is not unit length (norm {})",
                item.drawer_id,
                item.vector.norm()
            )));
        }
        if self.by_id.contains_key(&item.drawer_id) {
            return Ok(false);
        }
        self.insert_node(item.drawer_id, item.vector.as_slice(), item.metadata);
        Ok(true)
    }

    /// Tombstones an item. Returns whether it was live.
    pub fn delete(&mut self, drawer_id: &str) -> bool {
        let Some(node) = self.by_id.remove(drawer_id) else {
            return false;
        };
        self.nodes[node as usize].deleted = true;
        self.tombstones += 1;
        if self.needs_rebuild() {
            self.rebuild();
        }
        true
    }

    fn needs_rebuild(&self) -> bool {
        self.tombstones as f64 > REBUILD_TOMBSTONE_FRACTION * self.nodes.len() as f64
    }

    /// Rebuilds the graph from live items, in their original insertion order.
    pub fn rebuild(&mut self) {
        let old_nodes = std::mem::take(&mut self.nodes);
        let old_vectors = std::mem::take(&mut self.vectors);
        self.by_id.clear();
        self.entry = None;
        self.draws = 0;
        self.tombstones = 0;
        for (i, node) in old_nodes.into_iter().enumerate() {
            if node.deleted {
                continue;
            }
            let v = &old_vectors[i * self.dim..(i + 1) * self.dim];
            self.insert_node(node.id, v, node.meta);
        }
    }

    /// Live items in insertion order.
    pub fn items(&self) -> impl Iterator<Item = (&str, &[T], &IndexMeta)> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.deleted)
            .map(|(i, n)| (n.id.as_str(), self.vector(i as u32), &n.meta))
    }

    fn check_query(&self, query: &EmbeddingVector<T>, k: usize) -> Result<()> {
        if k == 0 {
            return Err(PalaceError::invalid("k must be at least 1"));
        }
        if query.dim() != self.dim {
            return Err(PalaceError::invalid(format!(
                "query dimension {} does not match index dimension {}",
                query.dim(),
                self.dim
            )));
        }
        Ok(())
    }

    /// True `k` nearest live items passing `filter`, ascending by distance,
    /// ties broken by drawer id.
    pub fn query_exact(
        &self,
        query: &EmbeddingVector<T>,
        k: usize,
        filter: &WhereFilter,
    ) -> Result<Vec<Hit>> {
        self.check_query(query, k)?;
        let q = query.as_slice();
        let scored: Vec<(f64, u32)> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.deleted && filter.matches(&n.meta))
            .map(|(i, _)| (self.dist_to(q, i as u32), i as u32))
            .collect();
        Ok(self.finish(scored, k))
    }

    /// Approximate `k` nearest live items passing `filter`.
    pub fn query_hnsw(
        &self,
        query: &EmbeddingVector<T>,
        k: usize,
        filter: &WhereFilter,
        ef: usize,
    ) -> Result<Vec<Hit>> {
        self.check_query(query, k)?;
        let Some(entry) = self.entry else {
            return Ok(Vec::new());
        };
        let q = query.as_slice();
        let base_ef = ef.max(k);
        let mut ef = base_ef;
        loop {
            let candidates = self.search_from(q, entry, ef);
            let exhausted = candidates.len() < ef;
            let hits: Vec<(f64, u32)> = candidates
                .into_iter()
                .filter(|&(_, n)| {
                    let node = &self.nodes[n as usize];
                    !node.deleted && filter.matches(&node.meta)
                })
                .collect();
            if hits.len() >= k || exhausted || ef >= base_ef * MAX_EF_EXPANSION {
                return Ok(self.finish(hits, k));
            }
            ef = (ef * 2).min(base_ef * MAX_EF_EXPANSION);
        }
    }

    /// Exact scan when at most `exact_threshold` live items pass the filter,
    /// HNSW with the configured `ef_search` otherwise.
    pub fn query(&self, query: &EmbeddingVector<T>, k: usize, filter: &WhereFilter) -> Result<Vec<Hit>> {
        let matching = if filter.is_empty() {
            self.len()
        } else {
            self.nodes
                .iter()
                .filter(|n| !n.deleted && filter.matches(&n.meta))
                .count()
        };
        if matching <= self.exact_threshold {
            self.query_exact(query, k, filter)
        } else {
            self.query_hnsw(query, k, filter, self.params.ef_search)
        }
    }
}

pub type Index = VectorIndex<f32>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn meta(wing: &str, room: &str) -> IndexMeta {
        IndexMeta {
            wing: wing.into(),
            room: room.into(),
            hall: None,
            closet: None,
            source_file: None,
            timestamp: "2026-01-01T00:00:00Z".into(),
            kind: DrawerKind::Manual,
        }
    }

    fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector<f32> {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        EmbeddingVector::normalized(v).unwrap()
    }

    fn item(id: &str, v: EmbeddingVector<f32>, wing: &str) -> IndexedDrawer<f32> {
        IndexedDrawer {
            drawer_id: id.into(),
            vector: v,
            metadata: meta(wing, "r"),
        }
    }

    fn build(n: usize, dim: usize, seed: u64) -> (Index, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = Index::new(dim, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        let wings = ["dev", "docs", "ops"];
        for i in 0..n {
            let v = random_unit(&mut rng, dim);
            idx.insert(item(&format!("d{i:05}"), v, wings[i % 3])).unwrap();
        }
        (idx, rng)
    }

    #[test]
    fn self_retrieval() {
        let (idx, _) = build(200, 16, 1);
        for (id, v, _) in idx.items().take(20) {
            let q = EmbeddingVector::new(v.to_vec()).unwrap();
            let hits = idx.query_hnsw(&q, 1, &WhereFilter::default(), 100).unwrap();
            assert_eq!(hits[0].drawer_id, id);
            assert!(hits[0].distance.abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_insert_is_noop() {
        let (mut idx, mut rng) = build(10, 8, 2);
        let v = random_unit(&mut rng, 8);
        assert!(!idx.insert(item("d00003", v, "dev")).unwrap());
        assert_eq!(idx.len(), 10);
    }

    #[test]
    fn thousand_inserts_counted() {
        let (idx, _) = build(1000, 8, 3);
        assert_eq!(idx.len(), 1000);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let (mut idx, mut rng) = build(1, 8, 4);
        let v = random_unit(&mut rng, 9);
        assert!(idx.insert(item("x", v.clone(), "dev")).is_err());
        assert!(idx.query_exact(&v, 1, &WhereFilter::default()).is_err());
    }

    #[test]
    fn exact_examples() {
        let idx = Index::new(2, DistanceMetric::L2, HnswParams::default()).unwrap();
        let q = EmbeddingVector::new(vec![1.0f32, 0.0]).unwrap();
        assert!(idx.query_exact(&q, 3, &WhereFilter::default()).unwrap().is_empty());

        let mut idx = idx;
        for (id, angle) in [("c", 0.3f64), ("a", 0.1), ("b", 0.2)] {
            let v = EmbeddingVector::normalized(vec![angle.cos() as f32, angle.sin() as f32]).unwrap();
            idx.insert(item(id, v, "dev")).unwrap();
        }
        let hits = idx.query_exact(&q, 2, &WhereFilter::default()).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.drawer_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        // chord length between unit vectors 0.1 rad apart
        assert!((hits[0].distance - 2.0 * 0.05f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_unit_vectors() {
        let mut idx = Index::new(2, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        let v = EmbeddingVector::new(vec![3.0f32, 4.0]).unwrap();
        assert!(matches!(idx.insert(item("x", v, "dev")), Err(PalaceError::InvalidInput(_))));
    }

    #[test]
    fn exact_ties_by_id() {
        let mut idx = Index::new(2, DistanceMetric::L2, HnswParams::default()).unwrap();
        for id in ["z", "m", "a"] {
            idx.insert(item(id, EmbeddingVector::new(vec![1.0, 0.0]).unwrap(), "dev")).unwrap();
        }
        let q = EmbeddingVector::new(vec![0.0f32, 1.0]).unwrap();
        let ids: Vec<_> = idx
            .query_exact(&q, 3, &WhereFilter::default())
            .unwrap()
            .into_iter()
            .map(|h| h.drawer_id)
            .collect();
        assert_eq!(ids, ["a", "m", "z"]);
    }

    #[test]
    fn single_item_hnsw_equals_exact() {
        let (idx, mut rng) = build(1, 16, 5);
        let q = random_unit(&mut rng, 16);
        let f = WhereFilter::default();
        assert_eq!(idx.query_hnsw(&q, 3, &f, 10).unwrap(), idx.query_exact(&q, 3, &f).unwrap());
    }

    #[test]
    fn filter_matching_nothing() {
        let (idx, mut rng) = build(300, 16, 6);
        let q = random_unit(&mut rng, 16);
        let f = WhereFilter::build(Some("nowhere"), None);
        assert!(idx.query_hnsw(&q, 5, &f, 50).unwrap().is_empty());
        assert!(idx.query_exact(&q, 5, &f).unwrap().is_empty());
    }

    #[test]
    fn delete_semantics() {
        let (mut idx, mut rng) = build(50, 16, 7);
        assert!(!idx.delete("absent"));
        let (id, v) = {
            let (id, v, _) = idx.items().nth(10).unwrap();
            (id.to_string(), EmbeddingVector::new(v.to_vec()).unwrap())
        };
        assert!(idx.delete(&id));
        let f = WhereFilter::default();
        assert!(idx.query_exact(&v, 50, &f).unwrap().iter().all(|h| h.drawer_id != id));
        assert!(idx.query_hnsw(&v, 50, &f, 100).unwrap().iter().all(|h| h.drawer_id != id));

        assert!(idx.insert(item(&id, v.clone(), "dev")).unwrap());
        assert_eq!(idx.query_hnsw(&v, 1, &f, 50).unwrap()[0].drawer_id, id);
        let _ = random_unit(&mut rng, 16);
    }

    #[test]
    fn heavy_deletes_trigger_rebuild() {
        let (mut idx, _) = build(100, 8, 8);
        let ids: Vec<String> = idx.items().map(|(id, _, _)| id.to_string()).collect();
        for id in ids.iter().take(30) {
            idx.delete(id);
        }
        assert!(idx.tombstones() as f64 <= REBUILD_TOMBSTONE_FRACTION * 100.0);
        assert_eq!(idx.len(), 70);
        let q = EmbeddingVector::new(idx.items().next().unwrap().1.to_vec()).unwrap();
        let f = WhereFilter::default();
        assert_eq!(idx.query_hnsw(&q, 70, &f, 200).unwrap().len(), 70);
    }

    #[test]
    fn recall_against_exact_small() {
        let (idx, mut rng) = build(2000, 32, 9);
        let f = WhereFilter::default();
        let mut overlap = 0usize;
        for _ in 0..50 {
            let q = random_unit(&mut rng, 32);
            let exact: Vec<_> = idx.query_exact(&q, 10, &f).unwrap().into_iter().map(|h| h.drawer_id).collect();
            let approx = idx.query_hnsw(&q, 10, &f, 100).unwrap();
            overlap += approx.iter().filter(|h| exact.contains(&h.drawer_id)).count();
        }
        let recall = overlap as f64 / 500.0;
        assert!(recall >= 0.95, "recall {recall}");
    }

    #[test]
    fn deterministic_across_builds() {
        let (a, mut rng) = build(500, 16, 10);
        let (b, _) = build(500, 16, 10);
        for _ in 0..10 {
            let q = random_unit(&mut rng, 16);
            let f = WhereFilter::build(Some("dev"), None);
            assert_eq!(a.query_hnsw(&q, 10, &f, 40).unwrap(), b.query_hnsw(&q, 10, &f, 40).unwrap());
        }
    }

    #[test]
    fn metric_orderings_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut cos = Index::new(24, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        let mut l2 = Index::new(24, DistanceMetric::L2, HnswParams::default()).unwrap();
        for i in 0..300 {
            let v = random_unit(&mut rng, 24);
            cos.insert(item(&format!("{i}"), v.clone(), "w")).unwrap();
            l2.insert(item(&format!("{i}"), v, "w")).unwrap();
        }
        let f = WhereFilter::default();
        for _ in 0..20 {
            let q = random_unit(&mut rng, 24);
            let a: Vec<_> = cos.query_exact(&q, 300, &f).unwrap().into_iter().map(|h| h.drawer_id).collect();
            let b: Vec<_> = l2.query_exact(&q, 300, &f).unwrap().into_iter().map(|h| h.drawer_id).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn generic_over_f64() {
        let mut idx = VectorIndex::<f64>::new(3, DistanceMetric::Cosine, HnswParams::default()).unwrap();
        for (i, v) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].into_iter().enumerate() {
            idx.insert(IndexedDrawer {
                drawer_id: format!("{i}"),
                vector: EmbeddingVector::new(v.to_vec()).unwrap(),
                metadata: meta("w", "r"),
            })
            .unwrap();
        }
        let q = EmbeddingVector::normalized(vec![0.1, 0.9, 0.0]).unwrap();
        assert_eq!(idx.query_hnsw(&q, 1, &WhereFilter::default(), 10).unwrap()[0].drawer_id, "1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn filtered_results_sound_and_sorted(seed in 0u64..1000, wing in prop::sample::select(vec!["dev", "docs", "ops", "none"]), k in 1usize..30) {
            let (idx, mut rng) = build(300, 8, seed);
            let q = random_unit(&mut rng, 8);
            let f = WhereFilter::build(Some(wing), None);
            for hits in [idx.query_exact(&q, k, &f).unwrap(), idx.query_hnsw(&q, k, &f, 20).unwrap()] {
                prop_assert!(hits.len() <= k);
                for h in &hits {
                    prop_assert_eq!(&idx.metadata(&h.drawer_id).unwrap().wing, wing);
                }
                prop_assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
            }
        }
    }
}
