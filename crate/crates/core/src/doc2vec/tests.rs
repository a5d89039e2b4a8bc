use rand::Rng;

use super::*;
use crate::corpus::{Sample, SideLabel};

fn random_model(n_words: usize, dim: usize, seed: u64) -> PvdmModel<f64> {
    let mut rng = seed::rng(seed);
    let pairs = (0..n_words).map(|i| (format!("w{i}"), rng.gen_range(1..100u64)));
    let vocab = Vocabulary::from_counts(pairs, 1).unwrap();
    let config = PvdmConfig {
        dim,
        min_count: 1,
        seed,
        ..PvdmConfig::default()
    };
    let mut model = PvdmModel::<f64>::initialize(vocab, 2, config);
    for x in model
        .word_vectors
        .as_mut_slice()
        .iter_mut()
        .chain(model.node_vectors.as_mut_slice())
        .chain(model.doc_vectors.as_mut_slice())
    {
        *x = rng.gen_range(-1.0..1.0);
    }
    model
}

fn doc(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_string()).collect()
}

#[test]
fn zero_nodes_give_half_per_decision() {
    let mut model = random_model(8, 4, 3);
    model.node_vectors.as_mut_slice().fill(0.0);
    let ctx = [0.3, -0.2, 0.9, 0.1];
    for w in 0..8 {
        let p = model.hs_probability(&ctx, model.vocab.word(w)).unwrap();
        assert_eq!(p, 0.5f64.powi(model.vocab.code(w).len() as i32));
    }
}

#[test]
fn two_word_vocabulary_is_a_single_bernoulli() {
    let model = random_model(2, 3, 5);
    let ctx = [0.7, -1.1, 0.4];
    let p0 = model.hs_probability(&ctx, model.vocab.word(0)).unwrap();
    let p1 = model.hs_probability(&ctx, model.vocab.word(1)).unwrap();
    assert!((p0 + p1 - 1.0).abs() < 1e-15);
    assert!(p0 > 0.0 && p0 < 1.0);
}

#[test]
fn leaf_probabilities_sum_to_one() {
    let model = random_model(8, 6, 11);
    let mut rng = seed::rng(99);
    let ctx: Vec<f64> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let total: f64 = (0..8)
        .map(|w| model.hs_probability(&ctx, model.vocab.word(w)).unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn unknown_word_and_bad_context_are_errors() {
    let model = random_model(4, 3, 1);
    assert!(matches!(
        model.hs_probability(&[0.0; 3], "nope"),
        Err(Error::UnknownWord(_))
    ));
    assert!(matches!(
        model.hs_probability(&[0.0; 2], "w0"),
        Err(Error::DimensionMismatch { .. })
    ));
}

/// Central differences over every parameter the position loss touches.
fn max_relative_error(model: &PvdmModel<f64>, window: &[u32], target: u32) -> f64 {
    const H: f64 = 1e-4;
    let grad = model.position_gradient(model.doc_vector(0), window, target);
    let loss_with = |m: &PvdmModel<f64>| m.position_loss(m.doc_vector(0), window, target);
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    let mut worst: f64 = 0.0;

    for j in 0..model.dim() {
        let mut plus = model.clone();
        plus.doc_vectors.row_mut(0)[j] += H;
        let mut minus = model.clone();
        minus.doc_vectors.row_mut(0)[j] -= H;
        let numeric = (loss_with(&plus) - loss_with(&minus)) / (2.0 * H);
        worst = worst.max(rel(grad.doc[j], numeric));
    }

    // Repeated window words accumulate one share per occurrence.
    let mut word_grad: std::collections::BTreeMap<u32, Vec<f64>> = Default::default();
    for (w, g) in &grad.words {
        let e = word_grad.entry(*w).or_insert_with(|| vec![0.0; model.dim()]);
        axpy(1.0, g, e);
    }
    for (&w, g) in &word_grad {
        for j in 0..model.dim() {
            let mut plus = model.clone();
            plus.word_vectors.row_mut(w as usize)[j] += H;
            let mut minus = model.clone();
            minus.word_vectors.row_mut(w as usize)[j] -= H;
            let numeric = (loss_with(&plus) - loss_with(&minus)) / (2.0 * H);
            worst = worst.max(rel(g[j], numeric));
        }
    }

    for (node, g) in &grad.nodes {
        for j in 0..model.dim() {
            let mut plus = model.clone();
            plus.node_vectors.row_mut(*node as usize)[j] += H;
            let mut minus = model.clone();
            minus.node_vectors.row_mut(*node as usize)[j] -= H;
            let numeric = (loss_with(&plus) - loss_with(&minus)) / (2.0 * H);
            worst = worst.max(rel(g[j], numeric));
        }
    }
    worst
}

#[test]
fn position_gradient_matches_finite_differences() {
    for seed in 0..5 {
        let model = random_model(9, 5, seed);
        let err = max_relative_error(&model, &[1, 4, 4, 7], (seed % 9) as u32);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn sgd_step_is_gradient_descent() {
    let mut model = random_model(7, 4, 21);
    let window = [0u32, 2, 5];
    let target = 3;
    let lr = 0.05;
    let grad = model.position_gradient(model.doc_vector(0), &window, target);
    let mut expected = model.clone();
    axpy(-lr, &grad.doc, expected.doc_vectors.row_mut(0));
    for (w, g) in &grad.words {
        axpy(-lr, g, expected.word_vectors.row_mut(*w as usize));
    }
    for (n, g) in &grad.nodes {
        axpy(-lr, g, expected.node_vectors.row_mut(*n as usize));
    }
    let loss = model.sgd_step(0, &window, target, lr, &mut Scratch::default());
    assert!((loss - grad.loss).abs() < 1e-12);
    let close = |a: &Matrix<f64>, b: &Matrix<f64>| {
        a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() < 1e-12)
    };
    assert!(close(&model.doc_vectors, &expected.doc_vectors));
    assert!(close(&model.word_vectors, &expected.word_vectors));
    assert!(close(&model.node_vectors, &expected.node_vectors));
}

#[test]
fn window_clips_at_document_boundaries() {
    let doc = [10, 11, 12, 13, 14];
    let mut w = Vec::new();
    fill_window(&doc, 0, 2, &mut w);
    assert_eq!(w, [11, 12]);
    fill_window(&doc, 2, 2, &mut w);
    assert_eq!(w, [10, 11, 13, 14]);
    fill_window(&doc, 4, 20, &mut w);
    assert_eq!(w, [10, 11, 12, 13]);
}

fn two_topic_corpus(n: usize) -> Corpus {
    let mut rng = seed::rng(5);
    let samples = (0..n)
        .map(|i| {
            let topic = i % 2;
            let text: Vec<String> = (0..30)
                .map(|_| format!("t{topic}w{}", rng.gen_range(0..10)))
                .collect();
            Sample::new(format!("d{i}"), vec![0.0], SideLabel::Left, "s", Vec::new(), text.join(" "))
        })
        .collect();
    Corpus::new(1, samples).unwrap()
}

fn small_config(epochs: usize) -> PvdmConfig {
    PvdmConfig {
        dim: 16,
        window: 5,
        epochs,
        min_count: 1,
        seed: 9,
        ..PvdmConfig::default()
    }
}

#[test]
fn zero_epochs_leaves_initialization() {
    let corpus = two_topic_corpus(4);
    let model = train_pvdm(&corpus, &small_config(0)).unwrap();
    let vocab = crate::corpus::build_vocabulary(&corpus, 1).unwrap();
    let init = PvdmModel::<f32>::initialize(vocab, 4, small_config(0));
    assert_eq!(model, init);
    assert!(model.node_vectors.as_slice().iter().all(|&x| x == 0.0));
    let bound = 0.5 / 16.0;
    assert!(model.word_vectors.as_slice().iter().all(|x| x.abs() <= bound));
}

#[test]
fn serial_training_is_bit_reproducible_and_lowers_loss() {
    let corpus = two_topic_corpus(40);
    let mut first = crate::observe::LossHistory::default();
    let a = train_pvdm_with(&corpus, &small_config(5), &mut first).unwrap();
    let b = train_pvdm(&corpus, &small_config(5)).unwrap();
    assert_eq!(a, b);
    let losses = first.losses("doc2vec");
    assert_eq!(losses.len(), 5);
    assert!(losses[4] <= losses[0], "{losses:?}");
}

#[test]
fn workers_give_finite_model_with_comparable_loss() {
    let corpus = two_topic_corpus(60);
    let docs = || corpus.iter().map(|s| s.tokens.as_slice());
    let serial = train_pvdm(&corpus, &small_config(8)).unwrap();
    let parallel = train_pvdm(&corpus, &PvdmConfig { workers: 3, ..small_config(8) }).unwrap();
    assert!(parallel.is_finite());
    let (ls, lp) = (serial.corpus_loss(docs()), parallel.corpus_loss(docs()));
    assert!((lp - ls).abs() <= 0.05 * ls, "serial {ls} parallel {lp}");
}

#[test]
fn documents_without_known_tokens_are_skipped() {
    let mut corpus = two_topic_corpus(10);
    corpus.samples.push(Sample::new("empty", vec![0.0], SideLabel::Right, "s", Vec::new(), "zzz"));
    let mut history = crate::observe::LossHistory::default();
    let config = PvdmConfig { min_count: 2, ..small_config(2) };
    let model = train_pvdm_with(&corpus, &config, &mut history).unwrap();
    assert_eq!(model.n_docs(), 11);
    assert!(history.0.iter().all(|l| l.skipped == 1));
}

#[test]
fn inference_contract() {
    let corpus = two_topic_corpus(20);
    let model = train_pvdm(&corpus, &small_config(3)).unwrap();
    assert!(matches!(
        model.infer_document(&doc(&["unknown", "words"]), 5, 1),
        Err(Error::NoInVocabularyTokens)
    ));
    assert!(model.infer_document(&corpus.samples[0].tokens, 0, 1).is_err());
    let a = model.infer_document(&corpus.samples[0].tokens, 1, 1).unwrap();
    let b = model.infer_document(&corpus.samples[0].tokens, 1, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.values.len(), 16);

    // One step equals a single pass of updates at the initial rate.
    let mut manual = fresh_vector::<f32>(16, 1);
    let ids = model.vocab.encode(&corpus.samples[0].tokens);
    let total = ids.len();
    let mut window = Vec::new();
    for t in 0..ids.len() {
        let lr = model.config.lr_at(t, total) as f32;
        fill_window(&ids, t, model.config.window, &mut window);
        let grad = model.position_gradient(&manual, &window, ids[t]);
        axpy(-lr, &grad.doc, &mut manual);
    }
    for (x, y) in a.values.iter().zip(&manual) {
        assert!((x - y).abs() < 1e-6);
    }
}

#[test]
fn nearest_words_contract() {
    let corpus = two_topic_corpus(40);
    let model = train_pvdm(&corpus, &small_config(10)).unwrap();
    let q = doc(&["t0w1"]);
    assert!(nearest_words(&model, &q, 0, QueryEmbedding::Inferred, 1).unwrap().is_empty());
    let ranked = nearest_words(&model, &q, 10, QueryEmbedding::Inferred, 1).unwrap();
    assert_eq!(ranked.len(), 10);
    assert!(ranked.iter().all(|(w, s)| w != "t0w1" && (-1.0..=1.0).contains(s)));
    assert!(ranked.windows(2).all(|p| p[0].1 >= p[1].1));
    let mean = nearest_words(&model, &q, 5, QueryEmbedding::WordMean, 1).unwrap();
    assert_eq!(mean.len(), 5);
}

#[test]
fn model_file_round_trip_and_errors() {
    let corpus = two_topic_corpus(6);
    let model = train_pvdm(&corpus, &small_config(1)).unwrap();
    let mut bytes = Vec::new();
    write_model(&model, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"PVDM");
    let back = read_model(bytes.as_slice()).unwrap();
    assert_eq!(back, model);
    let mut again = Vec::new();
    write_model(&back, &mut again).unwrap();
    assert_eq!(bytes, again);

    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(read_model(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_model(bad.as_slice()), Err(Error::Format(_))));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(matches!(read_model(wrong_version.as_slice()), Err(Error::Format(_))));
}

#[test]
fn header_only_file_is_an_empty_model() {
    let mut bytes = b"PVDM".to_vec();
    for v in [PVDM_VERSION, 8, 0, 0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let model = read_model(bytes.as_slice()).unwrap();
    assert_eq!(model.dim(), 8);
    assert_eq!(model.n_docs(), 0);
    assert!(model.vocab.is_empty());
}
