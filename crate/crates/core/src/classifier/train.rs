//! Adam and the minibatch training loops.

use rand::seq::SliceRandom;

use crate::corpus::{Corpus, SideLabel};
use crate::error::{Error, Result};
use crate::linalg::Real;
use crate::observe::{EpochLog, Observer};
use crate::seed;

use super::{batch_gradients, word_targets, BiasModel, ClassifierConfig, Dense, EmbeddingTable, Example, Mode, TrainSpec, WordHead};

/// Adam with bias-corrected moments, one moment pair per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T = f32> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(spec: &TrainSpec, layers: &[&Dense<T>]) -> Self {
        let zeros: Vec<Vec<T>> = layers.iter().map(|l| vec![T::zero(); l.n_params()]).collect();
        Self {
            lr: spec.lr,
            beta1: spec.beta1,
            beta2: spec.beta2,
            eps: spec.eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, layers: Vec<&mut Dense<T>>, grads: &[Dense<T>]) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step));
        let c2 = T::of(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::of(self.lr), T::of(self.eps));
        for (((layer, grad), m), v) in layers.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in layer.params_mut().zip(grad.params()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

fn fit(
    model: &mut BiasModel,
    mode: Mode,
    examples: &[Example<'_, f32>],
    spec: &TrainSpec,
    stage: &'static str,
    observer: &mut dyn Observer,
) -> Result<()> {
    spec.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid(format!("{stage}: no training examples")));
    }
    let mut adam = Adam::new(spec, &model.trainable(mode));
    let mut rng = seed::named_rng(spec.seed, &format!("{stage}/shuffle"));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut batch = Vec::with_capacity(spec.batch_size);
    for epoch in 1..=spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| examples[i]));
            let (loss, grads) = batch_gradients(model, mode, &batch);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("{stage} epoch {epoch}")));
            }
            adam.update(model.trainable_mut(mode), &grads);
            total += loss as f64 * chunk.len() as f64;
        }
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("{stage} epoch {epoch}")));
        }
        observer.epoch(&EpochLog {
            stage,
            epoch,
            loss: total / examples.len() as f64,
            skipped: 0,
        });
    }
    Ok(())
}

fn text_examples<'a>(
    corpus: &'a Corpus,
    embeddings: &'a EmbeddingTable,
    weights: [f32; 2],
) -> Result<Vec<Example<'a, f32>>> {
    corpus
        .iter()
        .map(|s| {
            Ok(Example {
                feature: &s.feature,
                doc: Some(embeddings.require(&s.id)?),
                label: s.side,
                weight: weights[s.side.index()],
                targets: None,
            })
        })
        .collect()
}

fn image_examples(corpus: &Corpus, weights: [f32; 2]) -> Vec<Example<'_, f32>> {
    corpus
        .iter()
        .map(|s| Example {
            feature: &s.feature,
            doc: None,
            label: s.side,
            weight: weights[s.side.index()],
            targets: None,
        })
        .collect()
}

fn resolve_weights(spec: &TrainSpec, corpus: &Corpus) -> Result<[f32; 2]> {
    let w = spec.class_weighting.resolve(corpus)?;
    Ok([w.get(SideLabel::Left) as f32, w.get(SideLabel::Right) as f32])
}

fn check_text_dim(config: &ClassifierConfig, embeddings: &EmbeddingTable) -> Result<()> {
    if !embeddings.is_empty() && embeddings.dim() != config.text_dim {
        return Err(Error::DimensionMismatch {
            expected: config.text_dim,
            found: embeddings.dim(),
        });
    }
    Ok(())
}

pub fn train_stage1(
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    config: &ClassifierConfig,
    spec: &TrainSpec,
) -> Result<BiasModel> {
    train_stage1_with(corpus, embeddings, config, spec, &mut ())
}

pub fn train_stage1_with(
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    config: &ClassifierConfig,
    spec: &TrainSpec,
    observer: &mut dyn Observer,
) -> Result<BiasModel> {
    config.validate()?;
    check_text_dim(config, embeddings)?;
    let weights = resolve_weights(spec, corpus)?;
    let examples = text_examples(corpus, embeddings, weights)?;
    let mut model = BiasModel::new(corpus.feature_dim, config, &mut seed::named_rng(spec.seed, "stage1/init"));
    fit(&mut model, Mode::Stage1, &examples, spec, "stage1", observer)?;
    Ok(model)
}

/// Adds and trains `head2` on the frozen trunk of `stage1`.
pub fn train_stage2(stage1: &BiasModel, corpus: &Corpus, spec: &TrainSpec) -> Result<BiasModel> {
    train_stage2_with(stage1, corpus, spec, &mut ())
}

pub fn train_stage2_with(
    stage1: &BiasModel,
    corpus: &Corpus,
    spec: &TrainSpec,
    observer: &mut dyn Observer,
) -> Result<BiasModel> {
    if corpus.feature_dim != stage1.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: stage1.feature_dim(),
            found: corpus.feature_dim,
        });
    }
    let weights = resolve_weights(spec, corpus)?;
    let mut model = stage1.clone();
    model.head2 = Some(Dense::xavier(
        model.trunk_dim(),
        2,
        &mut seed::named_rng(spec.seed, "stage2/init"),
    ));
    fit(&mut model, Mode::Stage2, &image_examples(corpus, weights), spec, "stage2", observer)?;
    Ok(model)
}

/// Trunk and `head2` trained end to end on images only, the baseline the
/// two-stage model is compared against.
pub fn train_image_only(
    corpus: &Corpus,
    config: &ClassifierConfig,
    spec: &TrainSpec,
    observer: &mut dyn Observer,
) -> Result<BiasModel> {
    config.validate()?;
    let weights = resolve_weights(spec, corpus)?;
    let mut rng = seed::named_rng(spec.seed, "image_only/init");
    let mut model = BiasModel::new(corpus.feature_dim, config, &mut rng);
    model.head2 = Some(Dense::xavier(model.trunk_dim(), 2, &mut rng));
    fit(&mut model, Mode::ImageOnly, &image_examples(corpus, weights), spec, "image_only", observer)?;
    Ok(model)
}

/// Fine-tunes a copy of `stage1` to predict which of `words` occur in each
/// sample's article. The bias heads are carried over untouched.
pub fn train_word_head(
    stage1: &BiasModel,
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    words: &[String],
    spec: &TrainSpec,
) -> Result<BiasModel> {
    train_word_head_with(stage1, corpus, embeddings, words, spec, &mut ())
}

pub fn train_word_head_with(
    stage1: &BiasModel,
    corpus: &Corpus,
    embeddings: &EmbeddingTable,
    words: &[String],
    spec: &TrainSpec,
    observer: &mut dyn Observer,
) -> Result<BiasModel> {
    if words.is_empty() {
        return Err(Error::invalid("word list is empty"));
    }
    let targets = word_targets(corpus, words);
    let mut examples = text_examples(corpus, embeddings, [1.0, 1.0])?;
    for (ex, t) in examples.iter_mut().zip(&targets) {
        ex.targets = Some(t);
    }
    let mut model = stage1.clone();
    model.word_head = Some(WordHead {
        words: words.to_vec(),
        layer: Dense::xavier(
            model.fusion.output_dim(),
            words.len(),
            &mut seed::named_rng(spec.seed, "words/init"),
        ),
    });
    fit(&mut model, Mode::Words, &examples, spec, "words", observer)?;
    Ok(model)
}
