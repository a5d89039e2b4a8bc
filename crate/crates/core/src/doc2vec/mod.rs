//! Distributed-memory paragraph vectors with a hierarchical softmax output.
//!
//! Each token is predicted from the mean of its document vector and the word
//! vectors in a window of `window` tokens on either side. The probability of
//! a word is a product of binary decisions along its Huffman path.

mod hogwild;
mod io;

pub use io::{load_model, read_model, save_model, write_model, PVDM_MAGIC, PVDM_VERSION};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::{axpy, cosine, dot, log_sigmoid, sigmoid, Matrix, Real};
use crate::observe::{EpochLog, Observer};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvdmConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub seed: u64,
    /// Passes over the tokens when inferring an unseen document.
    pub infer_steps: usize,
    /// More than one worker switches to lock-free shared updates.
    pub workers: usize,
}

impl Default for PvdmConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            window: 20,
            epochs: 20,
            min_count: 20,
            initial_lr: 0.025,
            final_lr: 1e-4,
            seed: 0,
            infer_steps: 50,
            workers: 1,
        }
    }
}

impl PvdmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 {
            return Err(Error::invalid("dim and window must be at least 1"));
        }
        if self.min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        if !(self.initial_lr > 0.0 && self.final_lr > 0.0 && self.final_lr <= self.initial_lr) {
            return Err(Error::invalid(
                "learning rates must satisfy 0 < final_lr <= initial_lr",
            ));
        }
        if self.workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(())
    }

    fn lr_at(&self, done: usize, total: usize) -> f64 {
        if total == 0 {
            return self.initial_lr;
        }
        let progress = done as f64 / total as f64;
        self.initial_lr - (self.initial_lr - self.final_lr) * progress
    }
}

/// Document embedding produced by training or inference.
#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbedding<T = f32> {
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvdmModel<T = f32> {
    pub vocab: Vocabulary,
    pub word_vectors: Matrix<T>,
    pub node_vectors: Matrix<T>,
    pub doc_vectors: Matrix<T>,
    pub config: PvdmConfig,
}

/// Gradient of the loss at one position, `-ln p(target | context)`.
#[derive(Debug, Clone)]
pub struct PositionGradient<T> {
    pub loss: T,
    pub doc: Vec<T>,
    /// One entry per window slot, in window order.
    pub words: Vec<(u32, Vec<T>)>,
    /// One entry per inner node on the target's path.
    pub nodes: Vec<(u32, Vec<T>)>,
}

fn uniform_init<T: Real>(rows: usize, dim: usize, rng: &mut seed::Rng) -> Matrix<T> {
    let half = 0.5 / dim as f64;
    let data = (0..rows * dim)
        .map(|_| T::of(rng.gen_range(-half..half)))
        .collect();
    Matrix::from_vec(rows, dim, data)
}

fn fresh_vector<T: Real>(dim: usize, seed: u64) -> Vec<T> {
    uniform_init::<T>(1, dim, &mut seed::rng(seed)).as_slice().to_vec()
}

impl<T: Real> PvdmModel<T> {
    /// Word and document vectors uniform in ±0.5/dim, inner nodes zero.
    pub fn initialize(vocab: Vocabulary, n_docs: usize, config: PvdmConfig) -> Self {
        let dim = config.dim;
        let mut rng = seed::named_rng(config.seed, "pvdm/init");
        let word_vectors = uniform_init(vocab.len(), dim, &mut rng);
        let doc_vectors = uniform_init(n_docs, dim, &mut rng);
        let node_vectors = Matrix::zeros(vocab.inner_nodes(), dim);
        Self {
            vocab,
            word_vectors,
            node_vectors,
            doc_vectors,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn n_docs(&self) -> usize {
        self.doc_vectors.rows()
    }

    pub fn doc_vector(&self, i: usize) -> &[T] {
        self.doc_vectors.row(i)
    }

    pub fn is_finite(&self) -> bool {
        self.word_vectors.is_finite() && self.node_vectors.is_finite() && self.doc_vectors.is_finite()
    }

    pub fn cast<U: Real>(&self) -> PvdmModel<U> {
        PvdmModel {
            vocab: self.vocab.clone(),
            word_vectors: self.word_vectors.cast(),
            node_vectors: self.node_vectors.cast(),
            doc_vectors: self.doc_vectors.cast(),
            config: self.config.clone(),
        }
    }

    /// `p(word | context)` under the hierarchical softmax.
    pub fn hs_probability(&self, context: &[T], word: &str) -> Result<T> {
        let w = self
            .vocab
            .get(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))?;
        self.check_dim(context.len())?;
        Ok(self.log_probability(context, w).exp())
    }

    /// Bit 0 contributes σ(+⟨ctx, node⟩), bit 1 contributes σ(−⟨ctx, node⟩).
    pub(crate) fn log_probability(&self, context: &[T], word: usize) -> T {
        self.vocab
            .code(word)
            .iter()
            .zip(self.vocab.path(word))
            .map(|(&bit, &node)| {
                let f = dot(context, self.node_vectors.row(node as usize));
                log_sigmoid(if bit == 0 { f } else { -f })
            })
            .sum()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// Mean of `doc` and the window word vectors.
    pub fn context(&self, doc: &[T], window: &[u32]) -> Vec<T> {
        let mut ctx = doc.to_vec();
        for &w in window {
            axpy(T::one(), self.word_vectors.row(w as usize), &mut ctx);
        }
        let scale = T::one() / T::of((window.len() + 1) as f64);
        ctx.iter_mut().for_each(|x| *x = *x * scale);
        ctx
    }

    pub fn position_loss(&self, doc: &[T], window: &[u32], target: u32) -> T {
        -self.log_probability(&self.context(doc, window), target as usize)
    }

    /// Analytic gradient of [`position_loss`](Self::position_loss).
    pub fn position_gradient(&self, doc: &[T], window: &[u32], target: u32) -> PositionGradient<T> {
        let ctx = self.context(doc, window);
        let target = target as usize;
        let mut d_ctx = vec![T::zero(); self.dim()];
        let mut nodes = Vec::new();
        let mut loss = T::zero();
        for (&bit, &node) in self.vocab.code(target).iter().zip(self.vocab.path(target)) {
            let row = self.node_vectors.row(node as usize);
            let f = dot(&ctx, row);
            loss = loss - log_sigmoid(if bit == 0 { f } else { -f });
            // d(-ln σ(±f))/df = σ(f) - (1 - bit)
            let g = sigmoid(f) - T::of(1.0 - bit as f64);
            axpy(g, row, &mut d_ctx);
            nodes.push((node, ctx.iter().map(|&c| g * c).collect()));
        }
        let scale = T::one() / T::of((window.len() + 1) as f64);
        let share: Vec<T> = d_ctx.iter().map(|&x| x * scale).collect();
        PositionGradient {
            loss,
            doc: share.clone(),
            words: window.iter().map(|&w| (w, share.clone())).collect(),
            nodes,
        }
    }

    /// One SGD step at document `d`, in place. Returns the loss before the
    /// update. Matches `params -= lr * position_gradient(..)`.
    fn sgd_step(&mut self, d: usize, window: &[u32], target: u32, lr: T, scratch: &mut Scratch<T>) -> T {
        scratch.ctx.clear();
        scratch.ctx.extend_from_slice(self.doc_vectors.row(d));
        for &w in window {
            axpy(T::one(), self.word_vectors.row(w as usize), &mut scratch.ctx);
        }
        let scale = T::one() / T::of((window.len() + 1) as f64);
        scratch.ctx.iter_mut().for_each(|x| *x = *x * scale);
        scratch.neu.clear();
        scratch.neu.resize(self.dim(), T::zero());

        let target = target as usize;
        let mut loss = T::zero();
        for (&bit, &node) in self.vocab.code(target).iter().zip(self.vocab.path(target)) {
            let row = self.node_vectors.row_mut(node as usize);
            let f = dot(&scratch.ctx, row);
            loss = loss - log_sigmoid(if bit == 0 { f } else { -f });
            // lr times the descent direction -(σ(f) - (1 - bit))
            let g = (T::of(1.0 - bit as f64) - sigmoid(f)) * lr;
            axpy(g, row, &mut scratch.neu);
            axpy(g, &scratch.ctx, row);
        }
        axpy(scale, &scratch.neu, self.doc_vectors.row_mut(d));
        for &w in window {
            axpy(scale, &scratch.neu, self.word_vectors.row_mut(w as usize));
        }
        loss
    }
}

struct Scratch<T> {
    ctx: Vec<T>,
    neu: Vec<T>,
    window: Vec<u32>,
}

impl<T> Default for Scratch<T> {
    fn default() -> Self {
        Self {
            ctx: Vec::new(),
            neu: Vec::new(),
            window: Vec::new(),
        }
    }
}

/// Tokens at `t - k .. t + k` excluding `t`, clipped at the ends.
pub(crate) fn fill_window(doc: &[u32], t: usize, k: usize, out: &mut Vec<u32>) {
    out.clear();
    let lo = t.saturating_sub(k);
    let hi = (t + k + 1).min(doc.len());
    out.extend_from_slice(&doc[lo..t]);
    out.extend_from_slice(&doc[t + 1..hi]);
}

pub fn train_pvdm(corpus: &Corpus, config: &PvdmConfig) -> Result<PvdmModel> {
    train_pvdm_with(corpus, config, &mut ())
}

/// Train word, node and document vectors; document `i` is sample `i`.
pub fn train_pvdm_with(
    corpus: &Corpus,
    config: &PvdmConfig,
    observer: &mut dyn Observer,
) -> Result<PvdmModel> {
    train_documents(
        corpus.iter().map(|s| s.tokens.as_slice()),
        config,
        observer,
    )
}

pub fn train_documents<'a, T: Real>(
    documents: impl IntoIterator<Item = &'a [String]>,
    config: &PvdmConfig,
    observer: &mut dyn Observer,
) -> Result<PvdmModel<T>> {
    config.validate()?;
    let documents: Vec<&[String]> = documents.into_iter().collect();
    if documents.is_empty() {
        return Err(Error::invalid("cannot train on an empty corpus"));
    }
    let vocab = Vocabulary::from_documents(documents.iter().copied(), config.min_count)?;
    let encoded: Vec<Vec<u32>> = documents.iter().map(|d| vocab.encode(d)).collect();
    let mut model = PvdmModel::<T>::initialize(vocab, encoded.len(), config.clone());
    if config.workers > 1 {
        hogwild::train(&mut model, &encoded, observer)?;
    } else {
        model.train_serial(&encoded, observer)?;
    }
    Ok(model)
}

impl<T: Real> PvdmModel<T> {
    fn train_serial(&mut self, docs: &[Vec<u32>], observer: &mut dyn Observer) -> Result<()> {
        let config = self.config.clone();
        let per_epoch: usize = docs.iter().map(Vec::len).sum();
        let total = per_epoch * config.epochs;
        let skipped = docs.iter().filter(|d| d.is_empty()).count();
        let mut scratch = Scratch::default();
        let mut done = 0;
        for epoch in 0..config.epochs {
            let mut loss_sum = 0.0;
            for (d, doc) in docs.iter().enumerate() {
                for t in 0..doc.len() {
                    let lr = T::of(config.lr_at(done, total));
                    let mut window = std::mem::take(&mut scratch.window);
                    fill_window(doc, t, config.window, &mut window);
                    let loss = self.sgd_step(d, &window, doc[t], lr, &mut scratch);
                    scratch.window = window;
                    loss_sum += loss.f64();
                    done += 1;
                }
            }
            let loss = loss_sum / per_epoch.max(1) as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("paragraph-vector epoch {}", epoch + 1)));
            }
            observer.epoch(&EpochLog {
                stage: "doc2vec",
                epoch: epoch + 1,
                loss,
                skipped,
            });
        }
        Ok(())
    }

    /// Mean `-ln p` per in-vocabulary token over the stored documents.
    pub fn corpus_loss<'a>(&self, documents: impl IntoIterator<Item = &'a [String]>) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut window = Vec::new();
        for (d, doc) in documents.into_iter().enumerate() {
            let doc = self.vocab.encode(doc);
            for t in 0..doc.len() {
                fill_window(&doc, t, self.config.window, &mut window);
                sum += self.position_loss(self.doc_vector(d), &window, doc[t]).f64();
                n += 1;
            }
        }
        sum / n.max(1) as f64
    }

    /// Optimize a fresh document vector against the frozen word and node
    /// vectors. The learning rate decays linearly over `steps` passes.
    pub fn infer_document(&self, tokens: &[String], steps: usize, seed: u64) -> Result<DocEmbedding<T>> {
        if steps == 0 {
            return Err(Error::invalid("inference needs at least one step"));
        }
        let doc = self.vocab.encode(tokens);
        if doc.is_empty() {
            return Err(Error::NoInVocabularyTokens);
        }
        let mut values = fresh_vector::<T>(self.dim(), seed);
        let total = doc.len() * steps;
        let mut done = 0;
        let mut scratch = Scratch::default();
        let mut window = Vec::new();
        let frozen = FrozenView(self);
        for _ in 0..steps {
            for t in 0..doc.len() {
                let lr = T::of(self.config.lr_at(done, total));
                fill_window(&doc, t, self.config.window, &mut window);
                frozen.step(&mut values, &window, doc[t], lr, &mut scratch);
                done += 1;
            }
        }
        Ok(DocEmbedding { values })
    }
}

/// Read-only twin of `sgd_step` for inference.
struct FrozenView<'m, T>(&'m PvdmModel<T>);

impl<T: Real> FrozenView<'_, T> {
    fn step(&self, doc: &mut [T], window: &[u32], target: u32, lr: T, scratch: &mut Scratch<T>) {
        let model = self.0;
        scratch.ctx.clear();
        scratch.ctx.extend_from_slice(doc);
        for &w in window {
            axpy(T::one(), model.word_vectors.row(w as usize), &mut scratch.ctx);
        }
        let scale = T::one() / T::of((window.len() + 1) as f64);
        scratch.ctx.iter_mut().for_each(|x| *x = *x * scale);
        scratch.neu.clear();
        scratch.neu.resize(doc.len(), T::zero());
        let target = target as usize;
        for (&bit, &node) in model.vocab.code(target).iter().zip(model.vocab.path(target)) {
            let row = model.node_vectors.row(node as usize);
            let f = dot(&scratch.ctx, row);
            let g = (T::of(1.0 - bit as f64) - sigmoid(f)) * lr;
            axpy(g, row, &mut scratch.neu);
        }
        axpy(scale, &scratch.neu, doc);
    }
}

/// How a query phrase is embedded for [`nearest_words`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueryEmbedding {
    #[default]
    Inferred,
    WordMean,
}

pub fn embed_query(
    model: &PvdmModel,
    query_tokens: &[String],
    method: QueryEmbedding,
    seed: u64,
) -> Result<DocEmbedding> {
    match method {
        QueryEmbedding::Inferred => model.infer_document(query_tokens, model.config.infer_steps, seed),
        QueryEmbedding::WordMean => {
            let ids = model.vocab.encode(query_tokens);
            if ids.is_empty() {
                return Err(Error::NoInVocabularyTokens);
            }
            let mut values = vec![0.0f32; model.dim()];
            for &w in &ids {
                axpy(1.0, model.word_vectors.row(w as usize), &mut values);
            }
            values.iter_mut().for_each(|x| *x /= ids.len() as f32);
            Ok(DocEmbedding { values })
        }
    }
}

/// Vocabulary words ranked by cosine similarity to the embedded query,
/// excluding the query's own tokens.
pub fn nearest_words(
    model: &PvdmModel,
    query_tokens: &[String],
    n: usize,
    method: QueryEmbedding,
    seed: u64,
) -> Result<Vec<(String, f32)>> {
    let query = embed_query(model, query_tokens, method, seed)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut ranked: Vec<(usize, f32)> = (0..model.vocab.len())
        .filter(|&w| !query_tokens.iter().any(|t| t == model.vocab.word(w)))
        .map(|w| (w, cosine(&query.values, model.word_vectors.row(w))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked
        .into_iter()
        .map(|(w, s)| (model.vocab.word(w).to_string(), s))
        .collect())
}

/// Stored document vectors ranked by cosine similarity to `query`.
pub fn nearest_documents(model: &PvdmModel, query: &[f32], n: usize) -> Vec<(usize, f32)> {
    let mut ranked: Vec<(usize, f32)> = (0..model.n_docs())
        .map(|d| (d, cosine(query, model.doc_vector(d))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

#[cfg(test)]
mod tests;
