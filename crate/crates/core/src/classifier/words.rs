//! Visually consistent words and image retrieval by word.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

use super::{BiasModel, EmbeddingTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualWords {
    /// Selected words, lowest dispersion first.
    pub words: Vec<String>,
    /// Mean squared distance of each word's sample features to their centroid.
    pub scores: Vec<f64>,
    /// Set when fewer than `keep` words were eligible.
    pub warning: Option<String>,
}

/// Among the `top_n_frequent` most frequent tokens (ties lexicographic),
/// keeps the `keep` words whose samples' features are least dispersed.
/// Words found in fewer than two samples are not eligible.
pub fn select_visual_words(corpus: &Corpus, top_n_frequent: usize, keep: usize) -> VisualWords {
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in corpus.iter() {
        for t in &s.tokens {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut by_freq: Vec<(&str, u64)> = freq.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let candidates: HashSet<&str> = by_freq.iter().take(top_n_frequent).map(|w| w.0).collect();

    let mut members: BTreeMap<&str, Vec<&[f32]>> = BTreeMap::new();
    for s in corpus.iter() {
        let present: HashSet<&str> = s.tokens.iter().map(String::as_str).filter(|t| candidates.contains(t)).collect();
        for w in present {
            members.entry(w).or_default().push(&s.feature);
        }
    }

    let mut scored: Vec<(f64, &str)> = members
        .into_iter()
        .filter(|(_, feats)| feats.len() >= 2)
        .map(|(w, feats)| (dispersion(corpus.feature_dim, &feats), w))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));

    let warning = (scored.len() < keep)
        .then(|| format!("only {} eligible words, fewer than the {keep} requested", scored.len()));
    scored.truncate(keep);
    VisualWords {
        words: scored.iter().map(|s| s.1.to_string()).collect(),
        scores: scored.iter().map(|s| s.0).collect(),
        warning,
    }
}

fn dispersion(dim: usize, feats: &[&[f32]]) -> f64 {
    let n = feats.len() as f64;
    let mut centroid = vec![0.0f64; dim];
    for f in feats {
        for (c, &x) in centroid.iter_mut().zip(*f) {
            *c += x as f64;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    feats
        .iter()
        .map(|f| f.iter().zip(&centroid).map(|(&x, c)| (x as f64 - c).powi(2)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// 0/1 presence of each word in each sample's tokens (exact match).
pub fn word_targets(corpus: &Corpus, words: &[String]) -> Vec<Vec<u8>> {
    corpus
        .iter()
        .map(|s| {
            let tokens: HashSet<&str> = s.tokens.iter().map(String::as_str).collect();
            words.iter().map(|w| tokens.contains(w.as_str()) as u8).collect()
        })
        .collect()
}

/// Samples ordered by descending word score, ties by id; at most `top`.
pub fn rank_images_for_word(
    model: &BiasModel,
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    word: &str,
    top: usize,
) -> Result<Vec<(String, f32)>> {
    let head = model.word_head.as_ref().ok_or(Error::WordHeadAbsent)?;
    let j = head
        .words
        .iter()
        .position(|w| w == word)
        .ok_or_else(|| Error::UnknownWord(word.to_string()))?;
    let mut scored = corpus
        .iter()
        .map(|s| {
            let scores = model.word_scores(&s.feature, embeddings.require(&s.id)?)?;
            Ok((s.id.clone(), scores[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(top);
    Ok(scored)
}
