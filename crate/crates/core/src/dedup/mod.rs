//! Near-duplicate removal.
//!
//! Every sample is linked to each of its `k` approximate nearest neighbors
//! lying within `threshold` (squared Euclidean). Connected components of two
//! or more samples are duplicate clusters; one member per cluster survives,
//! taken from the side (L/R) on which the image appeared more often.

mod hnsw;

pub use hnsw::{HnswIndex, HnswParams};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample, SideLabel};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SideCounts {
    #[serde(rename = "L")]
    pub left: usize,
    #[serde(rename = "R")]
    pub right: usize,
}

/// A set of near-duplicate samples and the one kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    pub canonical: String,
    /// Sorted ascending.
    pub members: Vec<String>,
    pub side_counts: SideCounts,
}

pub fn build_index(corpus: &Corpus, params: &HnswParams) -> Result<HnswIndex> {
    HnswIndex::build(
        corpus.iter().map(|s| (s.id.as_str(), s.feature.as_slice())),
        params,
    )
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Group sample indices given undirected duplicate edges. Components of
/// size ≥ 2 only, each sorted by id, ordered by their smallest id.
pub fn components(corpus: &Corpus, edges: impl IntoIterator<Item = (usize, usize)>) -> Vec<DuplicateCluster> {
    let mut uf = UnionFind::new(corpus.len());
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..corpus.len() {
        let root = uf.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_values()
        .filter(|g| g.len() >= 2)
        .map(|g| {
            let members: Vec<&Sample> = g.iter().map(|&i| &corpus.samples[i]).collect();
            make_cluster(&members)
        })
        .collect();
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    clusters
}

fn make_cluster(members: &[&Sample]) -> DuplicateCluster {
    let mut ids: Vec<String> = members.iter().map(|s| s.id.clone()).collect();
    ids.sort();
    let mut side_counts = SideCounts::default();
    for s in members {
        match s.side {
            SideLabel::Left => side_counts.left += 1,
            SideLabel::Right => side_counts.right += 1,
        }
    }
    DuplicateCluster {
        canonical: select_canonical(members).to_string(),
        members: ids,
        side_counts,
    }
}

/// Majority side wins and keeps its smallest id. On an exact tie the
/// smallest id overall is kept, whatever its side.
pub fn select_canonical<'a>(members: &[&'a Sample]) -> &'a str {
    assert!(!members.is_empty(), "cluster has no members");
    let left = members.iter().filter(|s| s.side == SideLabel::Left).count();
    let right = members.len() - left;
    let winner = match left.cmp(&right) {
        std::cmp::Ordering::Greater => Some(SideLabel::Left),
        std::cmp::Ordering::Less => Some(SideLabel::Right),
        std::cmp::Ordering::Equal => None,
    };
    members
        .iter()
        .filter(|s| winner.is_none_or(|side| s.side == side))
        .map(|s| s.id.as_str())
        .min()
        .expect("winning side is non-empty")
}

/// Duplicate clusters found through the approximate kNN graph. An edge is
/// kept when either endpoint lists the other among its `k` neighbors.
pub fn cluster_duplicates(corpus: &Corpus, params: &HnswParams, threshold: f32) -> Result<Vec<DuplicateCluster>> {
    if !(threshold >= 0.0) {
        return Err(Error::invalid(format!("threshold must be non-negative, got {threshold}")));
    }
    if corpus.is_empty() {
        return Ok(Vec::new());
    }
    let index = build_index(corpus, params)?;
    Ok(cluster_with_index(corpus, &index, params.k, threshold))
}

pub fn cluster_with_index(corpus: &Corpus, index: &HnswIndex, k: usize, threshold: f32) -> Vec<DuplicateCluster> {
    let mut edges = Vec::new();
    for node in 0..index.len() {
        for (other, dist) in index.knn_node(node, k) {
            if dist <= threshold {
                edges.push((node, other));
            }
        }
    }
    components(corpus, edges)
}

/// Canonical members plus every sample outside a cluster, in corpus order.
pub fn deduplicate(corpus: &Corpus, params: &HnswParams, threshold: f32) -> Result<(Corpus, Vec<DuplicateCluster>)> {
    let clusters = cluster_duplicates(corpus, params, threshold)?;
    Ok((apply_clusters(corpus, &clusters), clusters))
}

pub fn apply_clusters(corpus: &Corpus, clusters: &[DuplicateCluster]) -> Corpus {
    let mut dropped: HashSet<&str> = HashSet::new();
    for c in clusters {
        dropped.extend(c.members.iter().map(String::as_str).filter(|m| *m != c.canonical));
    }
    corpus.filtered(|s| !dropped.contains(s.id.as_str()))
}

pub fn write_report(clusters: &[DuplicateCluster], mut writer: impl Write) -> std::io::Result<()> {
    for c in clusters {
        serde_json::to_writer(&mut writer, c)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_report(reader: impl BufRead) -> Result<Vec<DuplicateCluster>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?,
        );
    }
    Ok(out)
}

pub fn save_report(clusters: &[DuplicateCluster], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_report(clusters, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<Vec<DuplicateCluster>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_report(BufReader::new(file))
}

/// Distances of sampled kNN pairs, bucketed to help pick a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceHistogram {
    /// `bins + 1` bucket edges.
    pub edges: Vec<f32>,
    pub counts: Vec<usize>,
}

pub fn knn_distance_histogram(index: &HnswIndex, sampled: usize, k: usize, bins: usize, seed: u64) -> DistanceHistogram {
    let bins = bins.max(1);
    let mut rng = seed::named_rng(seed, "dedup/histogram");
    let picked = sample_indices(&mut rng, index.len(), sampled.min(index.len()));
    let mut distances: Vec<f32> = Vec::new();
    for node in picked.iter() {
        distances.extend(index.knn_node(node, k).into_iter().map(|(_, d)| d));
    }
    let max = distances.iter().copied().fold(0.0f32, f32::max);
    let width = if max > 0.0 { max / bins as f32 } else { 1.0 };
    let edges = (0..=bins).map(|i| i as f32 * width).collect();
    let mut counts = vec![0; bins];
    for d in distances {
        counts[((d / width) as usize).min(bins - 1)] += 1;
    }
    DistanceHistogram { edges, counts }
}
