//! Browser playground for three pieces of `weakbias`: the Huffman tree
//! behind hierarchical softmax, near-duplicate clustering, and paragraph
//! vectors on a two-topic toy corpus.
//!
//! Each operation takes plain arguments and returns a JSON string, so the
//! page needs nothing beyond the generated bindings. The same functions are
//! callable natively, which is how they are tested.

use rand::Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use weakbias::corpus::{tokenize, Corpus, Sample, SideLabel, Vocabulary};
use weakbias::dedup::{self, HnswParams};
use weakbias::doc2vec::{self, nearest_documents, PvdmConfig, PvdmModel};
use weakbias::seed;
use weakbias::synth;

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CodeRow {
    word: String,
    count: u64,
    code: String,
    probability: f64,
}

#[derive(Serialize)]
struct HuffmanView {
    rows: Vec<CodeRow>,
    inner_nodes: usize,
    probability_sum: f64,
}

/// Huffman codes for the words of `text`, and the probability each word
/// gets from a random context vector under hierarchical softmax.
pub fn huffman_explorer(text: &str, seed_value: u32) -> Result<String, String> {
    let tokens = tokenize(text);
    let vocab = Vocabulary::from_documents([tokens.as_slice()], 1).map_err(|e| e.to_string())?;
    let dim = 8;
    let config = PvdmConfig {
        dim,
        min_count: 1,
        ..PvdmConfig::default()
    };
    let mut model = PvdmModel::<f64>::initialize(vocab, 1, config);
    let mut rng = seed::rng(seed_value as u64);
    for x in model.node_vectors.as_mut_slice() {
        *x = rng.gen_range(-1.0..1.0);
    }
    let context: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let rows = (0..model.vocab.len())
        .map(|i| {
            let word = model.vocab.word(i).to_string();
            Ok(CodeRow {
                probability: model.hs_probability(&context, &word).map_err(|e| e.to_string())?,
                count: model.vocab.counts()[i],
                code: model.vocab.code(i).iter().map(|b| char::from(b'0' + b)).collect(),
                word,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    json(&HuffmanView {
        probability_sum: rows.iter().map(|r| r.probability).sum(),
        inner_nodes: model.vocab.inner_nodes(),
        rows,
    })
}

#[derive(Deserialize)]
struct Point {
    x: f32,
    y: f32,
    /// "L" or "R".
    side: String,
}

#[derive(Serialize)]
struct DedupView {
    clusters: Vec<dedup::DuplicateCluster>,
    kept: Vec<String>,
}

/// Clusters 2-D points whose squared distance is at most `threshold`.
/// Points are `[{"x":..,"y":..,"side":"L"|"R"}]`; ids are `p{index}`.
pub fn dedup_playground(points_json: &str, threshold: f32) -> Result<String, String> {
    let points: Vec<Point> = serde_json::from_str(points_json).map_err(|e| e.to_string())?;
    if points.is_empty() {
        return json(&DedupView {
            clusters: Vec::new(),
            kept: Vec::new(),
        });
    }
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let side = if p.side == "L" { SideLabel::Left } else { SideLabel::Right };
            Sample::new(format!("p{i:03}"), vec![p.x, p.y], side, "canvas", Vec::<String>::new(), "")
        })
        .collect();
    let corpus = Corpus::new(2, samples).map_err(|e| e.to_string())?;
    let params = HnswParams {
        k: corpus.len().min(50),
        ef_search: corpus.len().max(50),
        ..HnswParams::default()
    };
    let (kept, clusters) = dedup::deduplicate(&corpus, &params, threshold).map_err(|e| e.to_string())?;
    json(&DedupView {
        clusters,
        kept: kept.iter().map(|s| s.id.clone()).collect(),
    })
}

#[derive(Serialize)]
struct ProjectedDoc {
    x: f64,
    y: f64,
    side: &'static str,
}

#[derive(Serialize)]
struct ProjectionView {
    docs: Vec<ProjectedDoc>,
    precision_at_1: f64,
}

/// Top-two principal directions by power iteration with deflation.
fn principal_axes(rows: &[Vec<f64>], rng: &mut seed::Rng) -> [Vec<f64>; 2] {
    let dim = rows[0].len();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..100 {
            let mut next = vec![0.0; dim];
            for r in rows {
                let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                next.iter_mut().zip(r).for_each(|(n, x)| *n += d * x);
            }
            for a in &axes {
                let d: f64 = next.iter().zip(a).map(|(x, y)| x * y).sum();
                next.iter_mut().zip(a).for_each(|(n, y)| *n -= d * y);
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v = next.into_iter().map(|x| x / norm).collect();
        }
        axes.push(v);
    }
    [axes[0].clone(), axes[1].clone()]
}

/// Trains paragraph vectors on a two-topic corpus and projects the document
/// vectors onto their top two principal components.
pub fn doc2vec_projection(n_docs: u32, doc_len: u32, epochs: u32, seed_value: u32) -> Result<String, String> {
    let corpus =
        synth::two_topic_corpus(n_docs as usize, 50, doc_len as usize, seed_value as u64).map_err(|e| e.to_string())?;
    let config = PvdmConfig {
        dim: 16,
        epochs: epochs as usize,
        min_count: 1,
        seed: seed_value as u64,
        ..PvdmConfig::default()
    };
    let model = doc2vec::train_pvdm(&corpus, &config).map_err(|e| e.to_string())?;
    let mut rows: Vec<Vec<f64>> = (0..model.n_docs())
        .map(|i| model.doc_vector(i).iter().map(|&x| x as f64).collect())
        .collect();
    let dim = model.dim();
    let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect();
    rows.iter_mut().for_each(|r| r.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m));
    let [a, b] = principal_axes(&rows, &mut seed::named_rng(seed_value as u64, "demo/pca"));
    let dot = |r: &[f64], v: &[f64]| r.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let hits = (0..corpus.len())
        .filter(|&i| {
            let nn = nearest_documents(&model, model.doc_vector(i), 2);
            nn.iter().find(|p| p.0 != i).is_some_and(|p| corpus.samples[p.0].side == corpus.samples[i].side)
        })
        .count();
    json(&ProjectionView {
        docs: rows
            .iter()
            .zip(corpus.iter())
            .map(|(r, s)| ProjectedDoc {
                x: dot(r, &a),
                y: dot(r, &b),
                side: s.side.code(),
            })
            .collect(),
        precision_at_1: hits as f64 / corpus.len() as f64,
    })
}

#[wasm_bindgen(js_name = huffmanExplorer)]
pub fn huffman_explorer_js(text: &str, seed_value: u32) -> Result<String, JsError> {
    huffman_explorer(text, seed_value).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = dedupPlayground)]
pub fn dedup_playground_js(points_json: &str, threshold: f32) -> Result<String, JsError> {
    dedup_playground(points_json, threshold).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = doc2vecProjection)]
pub fn doc2vec_projection_js(n_docs: u32, doc_len: u32, epochs: u32, seed_value: u32) -> Result<String, JsError> {
    doc2vec_projection(n_docs, doc_len, epochs, seed_value).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn huffman_probabilities_sum_to_one() {
        let v: Value = serde_json::from_str(&huffman_explorer("the cat sat on the mat the end", 3).unwrap()).unwrap();
        assert!((v["probability_sum"].as_f64().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(v["rows"].as_array().unwrap().len(), 6);
        assert_eq!(v["rows"][0]["word"], "the");
        assert!(huffman_explorer("", 3).is_err());
    }

    #[test]
    fn nearby_points_collapse() {
        let pts = r#"[{"x":0,"y":0,"side":"L"},{"x":0.1,"y":0,"side":"R"},{"x":0,"y":0.1,"side":"R"},{"x":5,"y":5,"side":"L"}]"#;
        let v: Value = serde_json::from_str(&dedup_playground(pts, 0.05).unwrap()).unwrap();
        assert_eq!(v["clusters"].as_array().unwrap().len(), 1);
        assert_eq!(v["clusters"][0]["canonical"], "p001");
        assert_eq!(v["kept"], serde_json::json!(["p001", "p003"]));
        assert!(dedup_playground("not json", 1.0).is_err());
    }

    #[test]
    fn projection_separates_topics() {
        let v: Value = serde_json::from_str(&doc2vec_projection(120, 10, 20, 1).unwrap()).unwrap();
        assert_eq!(v["docs"].as_array().unwrap().len(), 120);
        assert!(v["precision_at_1"].as_f64().unwrap() > 0.8);
    }
}
