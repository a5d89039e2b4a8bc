//! Hierarchical navigable small world graph over squared Euclidean distance.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::seed;

const MAX_LEVEL: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HnswParams {
    /// Neighbors kept per node on upper layers; layer 0 keeps `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Neighbors retrieved per sample when clustering.
    pub k: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 300,
            k: 200,
            seed: 0,
        }
    }
}

impl HnswParams {
    /// Checks the hard constraints and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.m < 2 {
            return Err(Error::invalid("HNSW m must be at least 2"));
        }
        if self.ef_construction == 0 || self.ef_search == 0 || self.k == 0 {
            return Err(Error::invalid("ef_construction, ef_search and k must be positive"));
        }
        let mut warnings = Vec::new();
        if self.ef_search < self.k {
            warnings.push(format!(
                "ef_search {} < k {}; searches widen to k + 1",
                self.ef_search, self.k
            ));
        }
        Ok(warnings)
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist: f32,
    node: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct HnswIndex {
    params: HnswParams,
    dim: usize,
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
    vectors: Vec<f32>,
    /// `links[node][layer]`, for layers `0..=level(node)`.
    links: Vec<Vec<Vec<u32>>>,
    entry: Option<u32>,
    top_layer: usize,
}

impl HnswIndex {
    /// Insert every `(id, vector)` in order. Levels come from the seeded
    /// generator, so the graph is a pure function of input and parameters.
    pub fn build<'a>(
        items: impl IntoIterator<Item = (&'a str, &'a [f32])>,
        params: &HnswParams,
    ) -> Result<Self> {
        params.validate()?;
        let mut items = items.into_iter().peekable();
        let dim = match items.peek() {
            Some((_, v)) => v.len(),
            None => return Err(Error::invalid("cannot index zero vectors")),
        };
        let mut index = Self {
            params: params.clone(),
            dim,
            ids: Vec::new(),
            lookup: HashMap::new(),
            vectors: Vec::new(),
            links: Vec::new(),
            entry: None,
            top_layer: 0,
        };
        let mut rng = seed::named_rng(params.seed, "hnsw/levels");
        let level_mult = 1.0 / (params.m as f64).ln();
        for (id, vector) in items {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if index.lookup.contains_key(id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            let u: f64 = 1.0 - rng.gen::<f64>();
            let level = ((-u.ln() * level_mult).floor() as usize).min(MAX_LEVEL);
            index.insert(id, vector, level);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, node: usize) -> &[f32] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    fn dist(&self, q: &[f32], node: u32) -> f32 {
        squared_distance(q, self.vector(node as usize))
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    /// Number of layers the node appears on, minus one.
    pub fn level(&self, node: usize) -> usize {
        self.links[node].len() - 1
    }

    pub fn neighbors(&self, node: usize, layer: usize) -> &[u32] {
        &self.links[node][layer]
    }

    pub fn entry_point(&self) -> Option<usize> {
        self.entry.map(|e| e as usize)
    }

    fn insert(&mut self, id: &str, vector: &[f32], level: usize) {
        let node = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.lookup.insert(id.to_string(), node);
        self.vectors.extend_from_slice(vector);
        self.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = self.entry else {
            self.entry = Some(node);
            self.top_layer = level;
            return;
        };
        let q = vector;
        let mut ep = Candidate {
            dist: self.dist(q, entry),
            node: entry,
        };
        for layer in (level + 1..=self.top_layer).rev() {
            ep = self.greedy(q, ep, layer);
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found = self.search_layer(q, &entry_points, self.params.ef_construction, layer);
            let chosen = self.select_neighbors(&found, self.params.m);
            self.links[node as usize][layer] = chosen.iter().map(|c| c.node).collect();
            for c in &chosen {
                self.connect(c.node, node, layer);
            }
            entry_points = found;
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = Some(node);
        }
    }

    /// Add `to` to `from`'s list on `layer`, shrinking it when over capacity.
    fn connect(&mut self, from: u32, to: u32, layer: usize) {
        let cap = self.max_links(layer);
        let list = &self.links[from as usize][layer];
        if list.len() < cap {
            self.links[from as usize][layer].push(to);
            return;
        }
        let base = self.vector(from as usize).to_vec();
        let mut candidates: Vec<Candidate> = list
            .iter()
            .chain(std::iter::once(&to))
            .map(|&n| Candidate {
                dist: self.dist(&base, n),
                node: n,
            })
            .collect();
        candidates.sort();
        let kept = self.select_neighbors(&candidates, cap);
        self.links[from as usize][layer] = kept.iter().map(|c| c.node).collect();
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the base
    /// than to every kept neighbor, then top up with the closest discarded
    /// ones. `sorted` must be ascending.
    fn select_neighbors(&self, sorted: &[Candidate], m: usize) -> Vec<Candidate> {
        let mut kept: Vec<Candidate> = Vec::with_capacity(m);
        let mut discarded = Vec::new();
        for &c in sorted {
            if kept.len() >= m {
                break;
            }
            let cv = self.vector(c.node as usize);
            let diverse = kept
                .iter()
                .all(|k| c.dist < squared_distance(cv, self.vector(k.node as usize)));
            if diverse {
                kept.push(c);
            } else {
                discarded.push(c);
            }
        }
        for c in discarded {
            if kept.len() >= m {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn greedy(&self, q: &[f32], mut best: Candidate, layer: usize) -> Candidate {
        loop {
            let mut improved = false;
            for &n in &self.links[best.node as usize][layer] {
                let c = Candidate {
                    dist: self.dist(q, n),
                    node: n,
                };
                if c < best {
                    best = c;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Best-first search returning up to `ef` nodes, ascending. Stops only
    /// once the result set is full, so `ef >= len()` visits every node
    /// reachable on the layer.
    fn search_layer(&self, q: &[f32], entry_points: &[Candidate], ef: usize, layer: usize) -> Vec<Candidate> {
        let mut visited = vec![false; self.ids.len()];
        let mut frontier: BinaryHeap<Reverse<Candidate>> = BinaryHeap::new();
        let mut results: BinaryHeap<Candidate> = BinaryHeap::new();
        for &ep in entry_points {
            if !std::mem::replace(&mut visited[ep.node as usize], true) {
                frontier.push(Reverse(ep));
                results.push(ep);
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        while let Some(Reverse(current)) = frontier.pop() {
            if results.len() >= ef {
                if let Some(worst) = results.peek() {
                    if current > *worst {
                        break;
                    }
                }
            }
            for &n in &self.links[current.node as usize][layer] {
                if std::mem::replace(&mut visited[n as usize], true) {
                    continue;
                }
                let c = Candidate {
                    dist: self.dist(q, n),
                    node: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| c < *w);
                if admit {
                    frontier.push(Reverse(c));
                    results.push(c);
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results.into_sorted_vec()
    }

    fn search_nodes(&self, q: &[f32], ef: usize) -> Vec<Candidate> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut ep = Candidate {
            dist: self.dist(q, entry),
            node: entry,
        };
        for layer in (1..=self.top_layer).rev() {
            ep = self.greedy(q, ep, layer);
        }
        self.search_layer(q, &[ep], ef, 0)
    }

    /// Approximate `k` nearest indexed ids to an arbitrary vector.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<(String, f32)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let found = self.search_nodes(query, self.params.ef_search.max(k));
        Ok(self.finish(found.into_iter(), k))
    }

    /// Approximate `k` nearest neighbors of an indexed sample, itself
    /// excluded. Ascending by distance, ties by id.
    pub fn knn(&self, query_id: &str, k: usize) -> Result<Vec<(String, f32)>> {
        let node = *self
            .lookup
            .get(query_id)
            .ok_or_else(|| Error::UnknownId(query_id.to_string()))?;
        Ok(self
            .knn_node(node as usize, k)
            .into_iter()
            .map(|(n, d)| (self.ids[n].clone(), d))
            .collect())
    }

    pub(crate) fn knn_node(&self, node: usize, k: usize) -> Vec<(usize, f32)> {
        let q = self.vector(node);
        let found = self.search_nodes(q, self.params.ef_search.max(k + 1));
        let mut out: Vec<(usize, f32)> = found
            .into_iter()
            .filter(|c| c.node as usize != node)
            .map(|c| (c.node as usize, c.dist))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| self.ids[a.0].cmp(&self.ids[b.0])));
        out.truncate(k);
        out
    }

    fn finish(&self, found: impl Iterator<Item = Candidate>, k: usize) -> Vec<(String, f32)> {
        let mut out: Vec<(String, f32)> = found
            .map(|c| (self.ids[c.node as usize].clone(), c.dist))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out.truncate(k);
        out
    }

    /// Nodes not reachable from the entry point over layer-0 links.
    pub fn unreachable_on_base_layer(&self) -> Vec<usize> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let mut seen = vec![false; self.len()];
        let mut stack = vec![entry as usize];
        seen[entry as usize] = true;
        while let Some(n) = stack.pop() {
            for &m in &self.links[n][0] {
                if !std::mem::replace(&mut seen[m as usize], true) {
                    stack.push(m as usize);
                }
            }
        }
        (0..self.len()).filter(|&n| !seen[n]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = seed::rng(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    fn build(vectors: &[Vec<f32>], params: &HnswParams) -> HnswIndex {
        let ids: Vec<String> = (0..vectors.len()).map(|i| format!("{i:05}")).collect();
        HnswIndex::build(ids.iter().map(|s| s.as_str()).zip(vectors.iter().map(|v| v.as_slice())), params).unwrap()
    }

    fn brute_force(vectors: &[Vec<f32>], q: usize, k: usize) -> Vec<(String, f32)> {
        let mut all: Vec<(String, f32)> = (0..vectors.len())
            .filter(|&i| i != q)
            .map(|i| (format!("{i:05}"), squared_distance(&vectors[q], &vectors[i])))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn single_vector_index() {
        let index = build(&[vec![1.0, 2.0]], &HnswParams::default());
        assert_eq!(index.search(&[9.0, 9.0], 5).unwrap()[0].0, "00000");
        assert!(index.knn("00000", 3).unwrap().is_empty());
        assert!(matches!(index.knn("nope", 3), Err(Error::UnknownId(_))));
    }

    #[test]
    fn rejects_mixed_dimensions_and_empty_input() {
        let a = [1.0f32, 2.0];
        let b = [1.0f32];
        let err = HnswIndex::build([("a", &a[..]), ("b", &b[..])], &HnswParams::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, found: 1 }));
        assert!(HnswIndex::build(std::iter::empty(), &HnswParams::default()).is_err());
        assert!(HnswParams { m: 1, ..HnswParams::default() }.validate().is_err());
        let warn = HnswParams { ef_search: 10, k: 50, ..HnswParams::default() }.validate().unwrap();
        assert_eq!(warn.len(), 1);
    }

    #[test]
    fn duplicates_are_both_indexed_and_found_first() {
        let mut vectors = gaussian(50, 4, 1);
        vectors.push(vectors[7].clone());
        let index = build(&vectors, &HnswParams::default());
        assert_eq!(index.len(), 51);
        let hits = index.knn("00007", 3).unwrap();
        assert_eq!(hits[0], ("00050".to_string(), 0.0));
    }

    #[test]
    fn k_beyond_corpus_returns_everyone_else() {
        let vectors = gaussian(20, 3, 2);
        let index = build(&vectors, &HnswParams::default());
        assert_eq!(index.knn("00003", 100).unwrap().len(), 19);
    }

    #[test]
    fn exhaustive_ef_matches_brute_force_exactly() {
        let vectors = gaussian(400, 8, 3);
        let params = HnswParams { ef_search: 400, m: 6, ef_construction: 40, ..HnswParams::default() };
        let index = build(&vectors, &params);
        assert!(index.unreachable_on_base_layer().is_empty());
        for q in (0..400).step_by(7) {
            assert_eq!(index.knn(&format!("{q:05}"), 25).unwrap(), brute_force(&vectors, q, 25));
        }
    }

    #[test]
    fn link_lists_respect_capacity() {
        let vectors = gaussian(600, 6, 4);
        let params = HnswParams { m: 5, ..HnswParams::default() };
        let index = build(&vectors, &params);
        for node in 0..index.len() {
            for layer in 0..=index.level(node) {
                assert!(index.neighbors(node, layer).len() <= index.max_links(layer));
            }
        }
        assert!(index.unreachable_on_base_layer().is_empty());
    }

    #[test]
    fn build_is_deterministic() {
        let vectors = gaussian(300, 5, 5);
        let a = build(&vectors, &HnswParams::default());
        let b = build(&vectors, &HnswParams::default());
        assert_eq!(a.links, b.links);
        assert_eq!(a.entry, b.entry);
    }
}
