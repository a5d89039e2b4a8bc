use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Retained words with their frequencies and Huffman coding.
///
/// Words are ordered by descending count, ties lexicographic; a word's index
/// is its position. Inner node `i` of the tree has index `i` in
/// `0..len() - 1`, the root being the last one created.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    codes: Vec<Vec<u8>>,
    paths: Vec<Vec<u32>>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from raw `(word, count)` pairs, dropping words below `min_count`.
    pub fn from_counts(
        counts: impl IntoIterator<Item = (String, u64)>,
        min_count: u64,
    ) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        let mut retained: Vec<(String, u64)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        if retained.is_empty() {
            return Err(Error::EmptyVocabulary(min_count as usize));
        }
        retained.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (words, counts): (Vec<String>, Vec<u64>) = retained.into_iter().unzip();
        let (codes, paths) = huffman(&words, &counts);
        let index: HashMap<String, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        if index.len() != words.len() {
            return Err(Error::invalid("vocabulary contains a repeated word"));
        }
        Ok(Self {
            words,
            counts,
            min_count,
            codes,
            paths,
            index,
        })
    }

    pub fn from_documents<'a>(
        documents: impl IntoIterator<Item = &'a [String]>,
        min_count: u64,
    ) -> Result<Self> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for doc in documents {
            for token in doc {
                *counts.entry(token.clone()).or_insert(0) += 1;
            }
        }
        Self::from_counts(counts, min_count)
    }

    /// No words; only produced when loading an empty model file.
    pub(crate) fn empty() -> Self {
        Self {
            words: Vec::new(),
            counts: Vec::new(),
            min_count: 1,
            codes: Vec::new(),
            paths: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn inner_nodes(&self) -> usize {
        self.words.len().saturating_sub(1)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Huffman bits from the root down; 0 = left branch.
    pub fn code(&self, i: usize) -> &[u8] {
        &self.codes[i]
    }

    /// Inner nodes visited from the root down, aligned with `code`.
    pub fn path(&self, i: usize) -> &[u32] {
        &self.paths[i]
    }

    /// Indices of the in-vocabulary tokens, in order.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens
            .iter()
            .filter_map(|t| self.get(t).map(|i| i as u32))
            .collect()
    }
}

pub fn build_vocabulary(corpus: &Corpus, min_count: u64) -> Result<Vocabulary> {
    Vocabulary::from_documents(corpus.iter().map(|s| s.tokens.as_slice()), min_count)
}

/// Huffman codes and paths. Nodes merge in order of (count, smallest word in
/// subtree); the first node popped takes bit 0.
fn huffman(words: &[String], counts: &[u64]) -> (Vec<Vec<u8>>, Vec<Vec<u32>>) {
    let n = words.len();
    if n == 1 {
        return (vec![Vec::new()], vec![Vec::new()]);
    }
    let mut lex_order: Vec<usize> = (0..n).collect();
    lex_order.sort_by(|&a, &b| words[a].cmp(&words[b]));
    let mut lex_rank = vec![0usize; n];
    for (rank, &i) in lex_order.iter().enumerate() {
        lex_rank[i] = rank;
    }

    let total = 2 * n - 1;
    let mut parent = vec![usize::MAX; total];
    let mut bit = vec![0u8; total];
    let mut heap: BinaryHeap<Reverse<(u64, usize, usize)>> = (0..n)
        .map(|i| Reverse((counts[i], lex_rank[i], i)))
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((ca, ra, a)) = heap.pop().expect("heap has two nodes");
        let Reverse((cb, rb, b)) = heap.pop().expect("heap has two nodes");
        parent[a] = next;
        parent[b] = next;
        bit[b] = 1;
        heap.push(Reverse((ca + cb, ra.min(rb), next)));
        next += 1;
    }

    let mut codes = Vec::with_capacity(n);
    let mut paths = Vec::with_capacity(n);
    for leaf in 0..n {
        let mut code = Vec::new();
        let mut path = Vec::new();
        let mut node = leaf;
        while parent[node] != usize::MAX {
            code.push(bit[node]);
            path.push((parent[node] - n) as u32);
            node = parent[node];
        }
        code.reverse();
        path.reverse();
        codes.push(code);
        paths.push(path);
    }
    (codes, paths)
}
