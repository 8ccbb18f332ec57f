//! Reciprocal rank fusion of the semantic and keyword result lists.

use std::collections::{BTreeMap, HashSet};

pub const RRF_K: f64 = 60.0;
pub const CLOSET_BOOST: f64 = 1.2;

#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub drawer_id: String,
    pub score: f64,
    /// 1-based rank in the semantic list.
    pub semantic_rank: Option<usize>,
    /// 1-based rank in the keyword list.
    pub keyword_rank: Option<usize>,
}

/// `fused(d) = sum over lists of 1 / (60 + rank(d))`; drawers in `boosted`
/// are multiplied by [`CLOSET_BOOST`]. Output is best first, ties broken by
/// id. Input lists are assumed duplicate-free.
pub fn fuse_scores(semantic: &[String], keyword: &[String], boosted: &HashSet<String>) -> Vec<Fused> {
    let mut acc: BTreeMap<&str, Fused> = BTreeMap::new();
    for (rank0, id) in semantic.iter().enumerate() {
        let e = acc.entry(id).or_insert_with(|| empty(id));
        e.semantic_rank = Some(rank0 + 1);
        e.score += 1.0 / (RRF_K + (rank0 + 1) as f64);
    }
    for (rank0, id) in keyword.iter().enumerate() {
        let e = acc.entry(id).or_insert_with(|| empty(id));
        e.keyword_rank = Some(rank0 + 1);
        e.score += 1.0 / (RRF_K + (rank0 + 1) as f64);
    }
    let mut out: Vec<Fused> = acc
        .into_values()
        .map(|mut f| {
            if boosted.contains(&f.drawer_id) {
                f.score *= CLOSET_BOOST;
            }
            f
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.drawer_id.cmp(&b.drawer_id))
    });
    out
}

fn empty(id: &str) -> Fused {
    Fused {
        drawer_id: id.to_string(),
        score: 0.0,
        semantic_rank: None,
        keyword_rank: None,
    }
}
