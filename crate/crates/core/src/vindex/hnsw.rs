//! Graph construction and layer search.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{IndexMeta, Node, VectorIndex};
use crate::embed::DistanceMetric;
use crate::scalar::Scalar;

const MAX_LEVEL: usize = 16;

#[derive(Clone, Copy, PartialEq)]
struct Scored {
    dist: f64,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then_with(|| self.node.cmp(&other.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `n`; returns true if it was not marked before.
    #[inline]
    fn insert(&mut self, n: u32) -> bool {
        let (w, b) = (n as usize / 64, 1u64 << (n % 64));
        let fresh = self.bits[w] & b == 0;
        self.bits[w] |= b;
        fresh
    }
}

impl<T: Scalar> VectorIndex<T> {
    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    /// Level for the next insertion: `floor(-ln(U) / ln(M))`, with U drawn
    /// from a ChaCha stream positioned by the insertion counter so that the
    /// draw sequence depends only on the seed.
    fn draw_level(&mut self) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_word_pos(u128::from(self.draws) * 2);
        self.draws += 1;
        let u: f64 = rng.random();
        let ml = 1.0 / (self.params.m as f64).ln();
        ((-(1.0 - u).ln() * ml).floor() as usize).min(MAX_LEVEL)
    }

    pub(super) fn insert_node(&mut self, id: String, vector: &[T], meta: IndexMeta) {
        let level = self.draw_level();
        let new = self.nodes.len() as u32;
        self.vectors.extend_from_slice(vector);
        self.nodes.push(Node {
            id: id.clone(),
            meta,
            level,
            links: vec![Vec::new(); level + 1],
            deleted: false,
        });
        self.by_id.insert(id, new);

        let Some(entry) = self.entry else {
            self.entry = Some(new);
            return;
        };
        let query = vector.to_vec();
        let top = self.nodes[entry as usize].level;
        let mut cur = Scored {
            dist: self.dist_to(&query, entry),
            node: entry,
        };
        for layer in (level + 1..=top).rev() {
            cur = self.greedy_step(&query, cur, layer);
        }
        let mut entry_points = vec![cur];
        for layer in (0..=level.min(top)).rev() {
            let found = self.search_layer(&query, &entry_points, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.m);
            self.nodes[new as usize].links[layer] = chosen.iter().map(|s| s.node).collect();
            for s in &chosen {
                self.link(s.node, new, s.dist, layer);
            }
            entry_points = found;
        }
        if level > top {
            self.entry = Some(new);
        }
    }

    /// Adds `new` to `target`'s neighbors on `layer`, pruning with the
    /// selection heuristic when the list overflows.
    fn link(&mut self, target: u32, new: u32, dist: f64, layer: usize) {
        let cap = self.max_links(layer);
        let links = &self.nodes[target as usize].links[layer];
        if links.len() < cap {
            self.nodes[target as usize].links[layer].push(new);
            return;
        }
        let base = self.vector(target).to_vec();
        let mut cands: Vec<Scored> = links
            .iter()
            .map(|&n| Scored {
                dist: self.dist_to(&base, n),
                node: n,
            })
            .collect();
        cands.push(Scored { dist, node: new });
        cands.sort();
        let kept = self.select_neighbors(&cands, cap);
        self.nodes[target as usize].links[layer] = kept.into_iter().map(|s| s.node).collect();
    }

    /// Neighbor selection heuristic: walk candidates nearest first and keep
    /// one only if it is closer to the base than to every neighbor kept so
    /// far. Remaining slots are back-filled with the nearest discarded
    /// candidates. `cands` must be sorted ascending.
    fn select_neighbors(&self, cands: &[Scored], m: usize) -> Vec<Scored> {
        if cands.len() <= m {
            return cands.to_vec();
        }
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut pruned: Vec<Scored> = Vec::new();
        for &c in cands {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.node);
            let diverse = kept
                .iter()
                .all(|k| DistanceMetric::Cosine.eval(cv, self.vector(k.node)) > c.dist);
            if diverse {
                kept.push(c);
            } else {
                pruned.push(c);
            }
        }
        for p in pruned {
            if kept.len() >= m {
                break;
            }
            kept.push(p);
        }
        kept
    }

    fn greedy_step(&self, query: &[T], mut cur: Scored, layer: usize) -> Scored {
        loop {
            let mut moved = false;
            for &n in &self.nodes[cur.node as usize].links[layer] {
                let d = self.dist_to(query, n);
                if d < cur.dist {
                    cur = Scored { dist: d, node: n };
                    moved = true;
                }
            }
            if !moved {
                return cur;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes sorted ascending.
    fn search_layer(&self, query: &[T], entry_points: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited = Visited::new(self.nodes.len());
        let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        let mut results: BinaryHeap<Scored> = BinaryHeap::new();
        for &ep in entry_points {
            if visited.insert(ep.node) {
                candidates.push(Reverse(ep));
                results.push(ep);
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Reverse(c)) = candidates.pop() {
            let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
            if c.dist > worst && results.len() >= ef {
                break;
            }
            for &n in &self.nodes[c.node as usize].links[layer] {
                if !visited.insert(n) {
                    continue;
                }
                let d = self.dist_to(query, n);
                let worst = results.peek().map_or(f64::INFINITY, |w| w.dist);
                if results.len() < ef || d < worst {
                    let s = Scored { dist: d, node: n };
                    candidates.push(Reverse(s));
                    results.push(s);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    /// Descends from the entry point and returns up to `ef` base-layer
    /// candidates as `(distance, node)`, ascending. Deleted nodes are
    /// included; callers filter them.
    pub(super) fn search_from(&self, query: &[T], entry: u32, ef: usize) -> Vec<(f64, u32)> {
        let top = self.nodes[entry as usize].level;
        let mut cur = Scored {
            dist: self.dist_to(query, entry),
            node: entry,
        };
        for layer in (1..=top).rev() {
            cur = self.greedy_step(query, cur, layer);
        }
        self.search_layer(query, &[cur], ef, 0)
            .into_iter()
            .map(|s| (s.dist, s.node))
            .collect()
    }
}
