//! Two-stage bias classifier with article text as privileged information.
//!
//! Stage 1 learns `head1(fusion([trunk(x); d]))` from image features `x` and
//! document embeddings `d`. Stage 2 freezes everything learned so far and fits
//! a new linear `head2` on `trunk(x)` alone, so prediction needs no text.

mod backprop;
mod checkpoint;
mod embeddings;
mod train;
mod words;

pub use backprop::{batch_gradients, batch_loss, Example, Mode};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, WBCK_MAGIC, WBCK_VERSION};
pub use embeddings::EmbeddingTable;
pub use train::{
    train_image_only, train_stage1, train_stage1_with, train_stage2, train_stage2_with, train_word_head,
    train_word_head_with, Adam,
};
pub use words::{rank_images_for_word, select_visual_words, word_targets, VisualWords};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassWeights, Corpus, SideLabel};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix, Real};
use crate::seed;

/// Layer sizes of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Width of each trunk layer.
    pub hidden: usize,
    /// Number of trunk layers.
    pub depth: usize,
    /// Width of the fusion layer output.
    pub fused: usize,
    /// Length of the document embeddings fed to the fusion layer.
    pub text_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            depth: 2,
            fused: 256,
            text_dim: 200,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.depth == 0 || self.fused == 0 {
            return Err(Error::invalid("hidden, depth and fused must all be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    /// Inverse class frequency of the training set.
    #[default]
    Balanced,
    /// Every sample weighs 1.
    Uniform,
    Fixed(ClassWeights),
}

impl ClassWeighting {
    pub fn resolve(&self, corpus: &Corpus) -> Result<ClassWeights> {
        match self {
            ClassWeighting::Balanced => crate::corpus::class_weights(corpus),
            ClassWeighting::Uniform => Ok(ClassWeights::UNIFORM),
            ClassWeighting::Fixed(w) => Ok(*w),
        }
    }
}

/// Optimizer settings for one training stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub class_weighting: ClassWeighting,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            epochs: 10,
            class_weighting: ClassWeighting::Balanced,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::invalid("lr must be positive and batch_size at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::invalid("Adam betas must lie in [0, 1) and eps be positive"));
        }
        Ok(())
    }
}

/// Affine map `W x + b`, `W` stored as out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn xavier(input: usize, output: usize, rng: &mut seed::Rng) -> Self {
        let a = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output).map(|_| T::of(rng.gen_range(-a..a))).collect();
        Self {
            weight: Matrix::from_vec(output, input, data),
            bias: vec![T::zero(); output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        out.resize(self.output_dim(), T::zero());
        self.weight.matvec(x, out);
        for (o, &b) in out.iter_mut().zip(&self.bias) {
            *o = *o + b;
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.weight.as_slice().iter().chain(&self.bias)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weight.as_mut_slice().iter_mut().chain(self.bias.iter_mut())
    }

    pub fn n_params(&self) -> usize {
        self.weight.as_slice().len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|x| x.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.iter().map(|x| U::of(x.f64())).collect(),
        }
    }
}

pub(crate) fn relu_in_place<T: Real>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Multi-label word predictor on the fusion output.
#[derive(Debug, Clone, PartialEq)]
pub struct WordHead<T = f32> {
    pub words: Vec<String>,
    pub layer: Dense<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasModel<T = f32> {
    pub trunk: Vec<Dense<T>>,
    pub fusion: Dense<T>,
    pub head1: Dense<T>,
    pub head2: Option<Dense<T>>,
    pub word_head: Option<WordHead<T>>,
}

impl<T: Real> BiasModel<T> {
    /// Fresh stage-1 network, Glorot-initialized.
    pub fn new(feature_dim: usize, config: &ClassifierConfig, rng: &mut seed::Rng) -> Self {
        let mut trunk = Vec::with_capacity(config.depth);
        let mut width = feature_dim;
        for _ in 0..config.depth {
            trunk.push(Dense::xavier(width, config.hidden, rng));
            width = config.hidden;
        }
        let fusion = Dense::xavier(width + config.text_dim, config.fused, rng);
        let head1 = Dense::xavier(config.fused, 2, rng);
        Self {
            trunk,
            fusion,
            head1,
            head2: None,
            word_head: None,
        }
    }

    /// Models always have at least one trunk layer.
    pub fn feature_dim(&self) -> usize {
        self.trunk[0].input_dim()
    }

    pub fn trunk_dim(&self) -> usize {
        self.trunk[self.trunk.len() - 1].output_dim()
    }

    pub fn text_dim(&self) -> usize {
        self.fusion.input_dim() - self.trunk_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.iter().all(Dense::is_finite)
            && self.fusion.is_finite()
            && self.head1.is_finite()
            && self.head2.as_ref().is_none_or(Dense::is_finite)
            && self.word_head.as_ref().is_none_or(|w| w.layer.is_finite())
    }

    pub fn cast<U: Real>(&self) -> BiasModel<U> {
        BiasModel {
            trunk: self.trunk.iter().map(Dense::cast).collect(),
            fusion: self.fusion.cast(),
            head1: self.head1.cast(),
            head2: self.head2.as_ref().map(Dense::cast),
            word_head: self.word_head.as_ref().map(|w| WordHead {
                words: w.words.clone(),
                layer: w.layer.cast(),
            }),
        }
    }

    fn check(&self, feature: &[T], doc: Option<&[T]>) -> Result<()> {
        if feature.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim(),
                found: feature.len(),
            });
        }
        if let Some(d) = doc {
            if d.len() != self.text_dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.text_dim(),
                    found: d.len(),
                });
            }
        }
        Ok(())
    }

    pub fn trunk_forward(&self, feature: &[T]) -> Vec<T> {
        let mut h = feature.to_vec();
        let mut next = Vec::new();
        for layer in &self.trunk {
            layer.forward(&h, &mut next);
            relu_in_place(&mut next);
            std::mem::swap(&mut h, &mut next);
        }
        h
    }

    pub fn fusion_forward(&self, feature: &[T], doc: &[T]) -> Vec<T> {
        let mut u = self.trunk_forward(feature);
        u.extend_from_slice(doc);
        let mut f = Vec::new();
        self.fusion.forward(&u, &mut f);
        relu_in_place(&mut f);
        f
    }

    /// Stage-1 logits `[left, right]`.
    pub fn forward_stage1(&self, feature: &[T], doc: &[T]) -> Result<[T; 2]> {
        self.check(feature, Some(doc))?;
        let mut out = Vec::new();
        self.head1.forward(&self.fusion_forward(feature, doc), &mut out);
        Ok([out[0], out[1]])
    }

    /// Stage-2 logits from the image alone.
    pub fn forward_stage2(&self, feature: &[T]) -> Result<[T; 2]> {
        let head2 = self.head2.as_ref().ok_or(Error::StageTwoAbsent)?;
        self.check(feature, None)?;
        let mut out = Vec::new();
        head2.forward(&self.trunk_forward(feature), &mut out);
        Ok([out[0], out[1]])
    }

    /// Word-presence probabilities, aligned with the word head's list.
    pub fn word_scores(&self, feature: &[T], doc: &[T]) -> Result<Vec<T>> {
        let head = self.word_head.as_ref().ok_or(Error::WordHeadAbsent)?;
        self.check(feature, Some(doc))?;
        let mut out = Vec::new();
        head.layer.forward(&self.fusion_forward(feature, doc), &mut out);
        Ok(out.into_iter().map(sigmoid).collect())
    }
}

pub fn softmax<T: Real>(logits: [T; 2]) -> [T; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Label and its probability. An exact 0.5 split goes to Left.
pub fn decide<T: Real>(logits: [T; 2]) -> (SideLabel, T) {
    let p = softmax(logits);
    if p[1] > p[0] {
        (SideLabel::Right, p[1])
    } else {
        (SideLabel::Left, p[0])
    }
}

/// Image-only prediction through the stage-2 head.
pub fn predict(model: &BiasModel, feature: &[f32]) -> Result<(SideLabel, f32)> {
    Ok(decide(model.forward_stage2(feature)?))
}

pub fn predict_corpus(model: &BiasModel, corpus: &Corpus) -> Result<Vec<SideLabel>> {
    corpus.iter().map(|s| predict(model, &s.feature).map(|p| p.0)).collect()
}

/// A stage-1 model with the text columns of the fusion layer zeroed, always
/// fed a zero document embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroTextModel {
    model: BiasModel,
}

pub fn ablate_zero_text(stage1: &BiasModel) -> ZeroTextModel {
    let mut model = stage1.clone();
    let trunk_dim = model.trunk_dim();
    let cols = model.fusion.input_dim();
    let weight = model.fusion.weight.as_mut_slice();
    for row in weight.chunks_exact_mut(cols) {
        row[trunk_dim..].fill(0.0);
    }
    ZeroTextModel { model }
}

impl ZeroTextModel {
    pub fn model(&self) -> &BiasModel {
        &self.model
    }

    /// The supplied embedding only has to have the right length; the zeroed
    /// columns make it irrelevant.
    pub fn logits_with(&self, feature: &[f32], doc: &[f32]) -> Result<[f32; 2]> {
        self.model.forward_stage1(feature, doc)
    }

    pub fn logits(&self, feature: &[f32]) -> Result<[f32; 2]> {
        let zero = vec![0.0; self.model.text_dim()];
        self.model.forward_stage1(feature, &zero)
    }

    pub fn predict(&self, feature: &[f32]) -> Result<(SideLabel, f32)> {
        Ok(decide(self.logits(feature)?))
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<SideLabel>> {
        corpus.iter().map(|s| self.predict(&s.feature).map(|p| p.0)).collect()
    }
}
