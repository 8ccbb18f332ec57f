//! Query pipeline: metadata-filtered vector search, BM25, and their fusion.

pub mod bm25;
pub mod classify;
pub mod closet;
pub mod fusion;
pub mod tunnel;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::embed_text;
use crate::error::{PalaceError, Result};
use crate::palace::{palace_exists, Palace};
use crate::text::words;
use crate::types::PalaceAddress;
use crate::vindex::WhereFilter;

use closet::summary_matches;
use fusion::fuse_scores;

/// Lower bound on how many candidates each ranker contributes.
pub const MIN_CANDIDATES: usize = 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Semantic,
    Keyword,
    #[default]
    Hybrid,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SearchMode::Semantic => "semantic",
            SearchMode::Keyword => "keyword",
            SearchMode::Hybrid => "hybrid",
        })
    }
}

impl FromStr for SearchMode {
    type Err = PalaceError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(SearchMode::Semantic),
            "keyword" => Ok(SearchMode::Keyword),
            "hybrid" => Ok(SearchMode::Hybrid),
            other => Err(PalaceError::invalid(format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub wing: Option<String>,
    pub room: Option<String>,
    pub n_results: usize,
    /// 0.0 disables the cutoff.
    pub max_distance: f64,
    pub mode: SearchMode,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>) -> Self {
        SearchRequest {
            query: query.into(),
            wing: None,
            room: None,
            n_results: 5,
            max_distance: 0.0,
            mode: SearchMode::Hybrid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() {
            return Err(PalaceError::invalid("query must be non-empty"));
        }
        if self.n_results == 0 {
            return Err(PalaceError::invalid("n_results must be at least 1"));
        }
        if !(self.max_distance >= 0.0 && self.max_distance.is_finite()) {
            return Err(PalaceError::invalid("max_distance must be a non-negative number"));
        }
        Ok(())
    }

    pub fn filter(&self) -> WhereFilter {
        WhereFilter::build(self.wing.as_deref(), self.room.as_deref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Semantic,
    Keyword,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub drawer_id: String,
    /// Verbatim drawer content.
    pub content: String,
    pub address: PalaceAddress,
    pub distance: f64,
    pub keyword_score: f64,
    pub fused_score: f64,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    pub timestamp: String,
}

impl Palace {
    /// Ranked drawers for `req`, best first, at most `n_results`.
    pub fn search(&self, req: &SearchRequest) -> Result<Vec<SearchResult>> {
        req.validate()?;
        let filter = req.filter();
        let qvec = embed_text(self.embedder(), &req.query)?;
        let pool = (3 * req.n_results).max(MIN_CANDIDATES);
        let terms = words(&req.query);

        self.read(|st| {
            let distance_of = |id: &str| st.index.index().distance(qvec.as_slice(), id).unwrap_or(f64::MAX);

            let semantic: Vec<String> = if req.mode == SearchMode::Keyword {
                Vec::new()
            } else {
                st.index
                    .index()
                    .query(&qvec, pool, &filter)?
                    .into_iter()
                    .filter(|h| req.max_distance == 0.0 || h.distance <= req.max_distance)
                    .map(|h| h.drawer_id)
                    .collect()
            };

            let keyword: Vec<(String, f64)> = if req.mode == SearchMode::Semantic {
                Vec::new()
            } else {
                st.bm25.search(&req.query, pool, |id| {
                    st.drawers.get(id).is_some_and(|d| {
                        let a = &d.drawer.address;
                        filter.wing.as_ref().is_none_or(|w| *w == a.wing)
                            && filter.room.as_ref().is_none_or(|r| *r == a.room)
                    })
                })
            };
            let keyword_scores: HashMap<&str, f64> = keyword.iter().map(|(id, s)| (id.as_str(), *s)).collect();
            let keyword_ids: Vec<String> = keyword.iter().map(|(id, _)| id.clone()).collect();

            let boosted: HashSet<String> = if req.mode == SearchMode::Hybrid {
                st.closets
                    .values()
                    .filter(|c| summary_matches(&c.summary, &terms))
                    .flat_map(|c| c.members.iter().cloned())
                    .collect()
            } else {
                HashSet::new()
            };

            let fused = fuse_scores(&semantic, &keyword_ids, &boosted);
            let results = fused
                .into_iter()
                .take(req.n_results)
                .filter_map(|f| {
                    let stored = st.drawers.get(&f.drawer_id)?;
                    let provenance = match (f.semantic_rank, f.keyword_rank) {
                        (Some(_), Some(_)) => Provenance::Both,
                        (Some(_), None) => Provenance::Semantic,
                        _ => Provenance::Keyword,
                    };
                    let keyword_score = match req.mode {
                        SearchMode::Semantic => 0.0,
                        _ => keyword_scores
                            .get(f.drawer_id.as_str())
                            .copied()
                            .unwrap_or_else(|| st.bm25.score(&terms, &f.drawer_id)),
                    };
                    let d = &stored.drawer;
                    Some(SearchResult {
                        distance: distance_of(&f.drawer_id),
                        drawer_id: f.drawer_id,
                        content: d.content.clone(),
                        address: d.address.clone(),
                        keyword_score,
                        fused_score: f.score,
                        provenance,
                        session_id: d.session_id.clone(),
                        source_file: d.source_file.clone(),
                        timestamp: d.timestamp.clone(),
                    })
                })
                .collect();
            Ok(results)
        })
    }
}

/// Opens the palace at `palace_path` and runs one query.
pub fn search_memories(palace_path: &Path, req: &SearchRequest) -> Result<Vec<SearchResult>> {
    if !palace_exists(palace_path) {
        return Err(PalaceError::NotFound(format!("no palace at {}", palace_path.display())));
    }
    req.validate()?;
    Palace::open(palace_path)?.search(req)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(w: &str, r: &str) -> PalaceAddress {
        PalaceAddress::new(w, r).unwrap()
    }

    fn palace() -> (tempfile::TempDir, Palace) {
        let dir = tempfile::tempdir().unwrap();
        let p = Palace::init(dir.path().join("p"), None).unwrap();
        (dir, p)
    }

    fn seed(p: &Palace) {
        let texts = [
            ("dev", "ops", "the deploy key lives in vault"),
            ("dev", "ops", "staging cluster runs on three nodes"),
            ("dev", "api", "the api rate limit is 100 requests per minute"),
            ("home", "garden", "tomatoes need watering every morning"),
            ("home", "kitchen", "the spare key is under the mat"),
            ("work", "people", "Alice leads the platform team"),
        ];
        for (w, r, t) in texts {
            p.remember(t, addr(w, r)).unwrap();
        }
    }

    #[test]
    fn hybrid_finds_keyphrase_first() {
        let (_d, p) = palace();
        seed(&p);
        let res = p.search(&SearchRequest::new("deploy key")).unwrap();
        assert_eq!(res[0].content, "the deploy key lives in vault");
        assert_eq!(res[0].provenance, Provenance::Both);
        assert!(res.len() <= 5);
    }

    #[test]
    fn wing_filter_sound() {
        let (_d, p) = palace();
        seed(&p);
        for mode in [SearchMode::Semantic, SearchMode::Keyword, SearchMode::Hybrid] {
            let req = SearchRequest {
                wing: Some("dev".into()),
                mode,
                ..SearchRequest::new("key")
            };
            for r in p.search(&req).unwrap() {
                assert_eq!(r.address.wing, "dev");
            }
        }
    }

    #[test]
    fn semantic_mode_has_no_keyword_score() {
        let (_d, p) = palace();
        seed(&p);
        let req = SearchRequest {
            mode: SearchMode::Semantic,
            n_results: 10,
            ..SearchRequest::new("deploy key")
        };
        let res = p.search(&req).unwrap();
        assert_eq!(res.len(), 6);
        assert!(res.iter().all(|r| r.keyword_score == 0.0 && r.provenance == Provenance::Semantic));
        assert!(res.windows(2).all(|w| w[0].fused_score >= w[1].fused_score));
    }

    #[test]
    fn max_distance_zero_is_disabled() {
        let (_d, p) = palace();
        seed(&p);
        let base = SearchRequest {
            mode: SearchMode::Semantic,
            n_results: 10,
            ..SearchRequest::new("zzz qqq")
        };
        assert_eq!(p.search(&base).unwrap().len(), 6);
        let tight = SearchRequest {
            max_distance: 1e-9,
            ..base
        };
        assert!(p.search(&tight).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let (_d, p) = palace();
        assert!(matches!(p.search(&SearchRequest::new("  ")), Err(PalaceError::InvalidInput(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            search_memories(&dir.path().join("none"), &SearchRequest::new("x")),
            Err(PalaceError::NotFound(_))
        ));
        assert!(p.search(&SearchRequest::new("anything")).unwrap().is_empty());
    }

    #[test]
    fn closet_boost_applies_in_hybrid() {
        let (_d, p) = palace();
        let boxed = addr("dev", "ops").with_closet("keys").unwrap();
        p.remember("Rotate credentials monthly.", boxed).unwrap();
        p.remember("Credentials for staging are in the wiki.", addr("dev", "ops")).unwrap();
        let res = p.search(&SearchRequest::new("rotate")).unwrap();
        let top = &res[0];
        assert_eq!(top.content, "Rotate credentials monthly.");
        assert!(top.fused_score > 2.0 / 61.0);
    }

    #[test]
    fn results_are_verbatim() {
        let (_d, p) = palace();
        let text = "  odd   spacing\r\nand trailing  ";
        p.remember(text, addr("a", "b")).unwrap();
        let res = p.search(&SearchRequest::new("spacing")).unwrap();
        assert_eq!(res[0].content, text);
    }
}
