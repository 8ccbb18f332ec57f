//! Okapi BM25 over an incrementally maintained inverted index.
//!
//! BM25(D, Q) = sum over distinct q in Q of
//!     IDF(q) * tf(q, D) * (k1 + 1) / (tf(q, D) + k1 * (1 - b + b * |D| / avgdl))
//! with IDF(q) = ln(1 + (N - df + 0.5) / (df + 0.5)), which is never
//! negative. Corpus statistics cover every indexed document.

use std::collections::{BTreeSet, HashMap};

use crate::text::words;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

#[derive(Debug, Default, Clone)]
pub struct Bm25Index {
    postings: HashMap<String, HashMap<String, u32>>,
    doc_terms: HashMap<String, HashMap<String, u32>>,
    doc_len: HashMap<String, u32>,
    total_len: u64,
}

impl Bm25Index {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.doc_len.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_len.is_empty()
    }

    /// Indexes `text` under `doc_id`, replacing any previous entry.
    pub fn add(&mut self, doc_id: &str, text: &str) {
        self.remove(doc_id);
        let tokens = words(text);
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in tokens.iter() {
            *tf.entry(t.clone()).or_insert(0) += 1;
        }
        for (term, &n) in &tf {
            self.postings
                .entry(term.clone())
                .or_default()
                .insert(doc_id.to_string(), n);
        }
        self.doc_len.insert(doc_id.to_string(), tokens.len() as u32);
        self.total_len += tokens.len() as u64;
        self.doc_terms.insert(doc_id.to_string(), tf);
    }

    pub fn remove(&mut self, doc_id: &str) -> bool {
        let Some(terms) = self.doc_terms.remove(doc_id) else {
            return false;
        };
        for term in terms.keys() {
            if let Some(p) = self.postings.get_mut(term) {
                p.remove(doc_id);
                if p.is_empty() {
                    self.postings.remove(term);
                }
            }
        }
        if let Some(len) = self.doc_len.remove(doc_id) {
            self.total_len -= u64::from(len);
        }
        true
    }

    fn avgdl(&self) -> f64 {
        if self.doc_len.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.doc_len.len() as f64
        }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_len.len() as f64;
        let df = self.postings.get(term).map_or(0, HashMap::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_score(&self, term: &str, tf: u32, doc_len: u32, avgdl: f64) -> f64 {
        let tf = f64::from(tf);
        let norm = if avgdl > 0.0 {
            1.0 - B + B * f64::from(doc_len) / avgdl
        } else {
            1.0
        };
        self.idf(term) * tf * (K1 + 1.0) / (tf + K1 * norm)
    }

    /// Score of one document for a set of query terms; 0 when no term occurs.
    pub fn score(&self, query_terms: &[String], doc_id: &str) -> f64 {
        let (Some(terms), Some(&len)) = (self.doc_terms.get(doc_id), self.doc_len.get(doc_id)) else {
            return 0.0;
        };
        let avgdl = self.avgdl();
        let distinct: BTreeSet<&String> = query_terms.iter().collect();
        distinct
            .into_iter()
            .filter_map(|q| terms.get(q).map(|&tf| self.term_score(q, tf, len, avgdl)))
            .sum()
    }

    /// Documents with a positive score that pass `accept`, best first, ties
    /// broken by id, at most `k`.
    pub fn search(&self, query: &str, k: usize, accept: impl Fn(&str) -> bool) -> Vec<(String, f64)> {
        let query_terms = words(query);
        let avgdl = self.avgdl();
        let distinct: BTreeSet<&String> = query_terms.iter().collect();
        let mut scores: HashMap<&str, f64> = HashMap::new();
        for term in distinct {
            let Some(posting) = self.postings.get(term) else {
                continue;
            };
            for (doc, &tf) in posting {
                if !accept(doc) {
                    continue;
                }
                let len = self.doc_len[doc];
                *scores.entry(doc.as_str()).or_insert(0.0) += self.term_score(term, tf, len, avgdl);
            }
        }
        let mut ranked: Vec<(String, f64)> = scores
            .into_iter()
            .filter(|&(_, s)| s > 0.0)
            .map(|(d, s)| (d.to_string(), s))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        ranked
    }
}
