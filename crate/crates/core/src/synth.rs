//! Seeded synthetic corpora with known structure.
//!
//! [`make_synthetic`] draws a latent topic `z` and a visual cue `v` per
//! sample. The stance is `sign(lean(z) · a + v · b)`; the weak label agrees
//! with it with probability `label_correlation`. Images see the topic only
//! through a faint direction `W · onehot(z)` and the cue through a
//! low-variance coordinate, both buried under high-variance nuisance
//! dimensions. Articles are filler sentences followed by one sentence in
//! which topic words are mixed with filler, so truncating to the leading
//! sentences removes the topic.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sample, SideLabel};
use crate::error::{Error, Result};
use crate::seed;

/// A word whose samples all sit in one tight feature cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedWord {
    pub word: String,
    /// Fraction of samples carrying the word.
    pub fraction: f64,
    /// Per-coordinate standard deviation around the cluster center.
    pub spread: f64,
}

impl Default for PlantedWord {
    fn default() -> Self {
        Self {
            word: "alpha".into(),
            fraction: 0.15,
            spread: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub n_topics: usize,
    /// Distinct words per topic, named `t{topic}w{index}`.
    pub topic_words: usize,
    /// Shared filler words, named `g{index}`.
    pub generic_words: usize,
    /// Filler sentences before the topic sentence.
    pub filler_sentences: usize,
    pub sentence_length: usize,
    /// Chance that a token of the topic sentence is a topic word rather
    /// than filler.
    pub topic_rate: f64,
    /// Dimensions carrying the topic appearance.
    pub topic_dims: usize,
    /// Length of each topic's appearance vector.
    pub topic_strength: f64,
    /// Standard deviation of the cue coordinate.
    pub cue_scale: f64,
    pub nuisance_dims: usize,
    pub nuisance_scale: f64,
    /// Gaussian noise on the topic and cue dimensions.
    pub noise: f64,
    /// `a` in the stance rule.
    pub lean_weight: f64,
    /// `b` in the stance rule.
    pub cue_weight: f64,
    /// Probability that the weak label equals the stance.
    pub label_correlation: f64,
    /// Exact share of Left labels, reached by rejection sampling.
    pub left_fraction: Option<f64>,
    /// Sources per side, named `source-L{j}` / `source-R{j}`.
    pub sources_per_side: usize,
    pub planted: Option<PlantedWord>,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            n_topics: 8,
            topic_words: 12,
            generic_words: 60,
            filler_sentences: 3,
            sentence_length: 8,
            topic_rate: 0.5,
            topic_dims: 8,
            topic_strength: 1.0,
            cue_scale: 0.5,
            nuisance_dims: 24,
            nuisance_scale: 3.0,
            noise: 1.0,
            lean_weight: 1.0,
            cue_weight: 1.0,
            label_correlation: 0.9,
            left_fraction: None,
            sources_per_side: 5,
            planted: None,
            id_prefix: "syn".into(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Layout of each feature vector: topic dims, one cue dim, nuisance dims.
    pub fn feature_dim(&self) -> usize {
        self.topic_dims + 1 + self.nuisance_dims
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_samples", self.n_samples),
            ("n_topics", self.n_topics),
            ("topic_words", self.topic_words),
            ("generic_words", self.generic_words),
            ("sentence_length", self.sentence_length),
            ("sources_per_side", self.sources_per_side),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be at least 1")));
        }
        let reals = [
            self.topic_strength,
            self.cue_scale,
            self.nuisance_scale,
            self.noise,
            self.lean_weight,
            self.cue_weight,
        ];
        if reals.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("scales and weights must be finite and non-negative"));
        }
        if !(self.topic_rate > 0.0 && self.topic_rate <= 1.0) {
            return Err(Error::invalid("topic_rate must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.label_correlation) {
            return Err(Error::invalid("label_correlation must lie in [0, 1]"));
        }
        if let Some(f) = self.left_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid("left_fraction must lie in (0, 1)"));
            }
        }
        if let Some(p) = &self.planted {
            if !(0.0..=1.0).contains(&p.fraction) || !(p.spread >= 0.0) || p.word.is_empty() {
                return Err(Error::invalid("planted word needs a name, fraction in [0, 1] and spread ≥ 0"));
            }
        }
        Ok(())
    }
}

/// Corpus used by the two-stage benchmarks: 5,000 samples, split 4,000/1,000.
pub fn benchmark_spec(seed_value: u64) -> SyntheticSpec {
    SyntheticSpec {
        seed: seed_value,
        ..SyntheticSpec::default()
    }
}

/// Desk-scale pipeline settings matched to [`benchmark_spec`].
pub fn benchmark_pipeline() -> crate::pipeline::PipelineConfig {
    use crate::classifier::{ClassifierConfig, TrainSpec};
    use crate::doc2vec::PvdmConfig;
    crate::pipeline::PipelineConfig {
        doc2vec: PvdmConfig {
            dim: 32,
            window: 1,
            epochs: 10,
            min_count: 5,
            ..PvdmConfig::default()
        },
        classifier: ClassifierConfig {
            hidden: 64,
            depth: 2,
            fused: 64,
            text_dim: 32,
        },
        stage1: TrainSpec {
            lr: 1e-3,
            epochs: 10,
            ..TrainSpec::default()
        },
        stage2: TrainSpec {
            lr: 1e-3,
            epochs: 30,
            ..TrainSpec::default()
        },
    }
}

struct Latent {
    topic: usize,
    cue: f64,
    side: SideLabel,
}

fn normal(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Benchmark corpus described in the module docs. Deterministic in `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut world = seed::named_rng(spec.seed, "synth/world");
    let appearance: Vec<Vec<f64>> = (0..spec.n_topics)
        .map(|_| {
            let v: Vec<f64> = (0..spec.topic_dims).map(|_| normal(&mut world)).collect();
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter().map(|x| x * spec.topic_strength / len).collect()
        })
        .collect();
    let leans: Vec<f64> = {
        let mut l: Vec<f64> = (0..spec.n_topics).map(|z| if z % 2 == 0 { -1.0 } else { 1.0 }).collect();
        l.shuffle(&mut world);
        l
    };
    let planted_center: Vec<f32> = (0..spec.feature_dim())
        .map(|_| (normal(&mut world) * 2.0) as f32)
        .collect();

    let mut rng = seed::named_rng(spec.seed, "synth/samples");
    let quota = spec.left_fraction.map(|f| {
        let left = ((spec.n_samples as f64) * f).round() as usize;
        [left, spec.n_samples - left]
    });
    let mut filled = [0usize; 2];
    let mut samples = Vec::with_capacity(spec.n_samples);
    let width = (spec.n_samples.max(2) - 1).to_string().len();

    while samples.len() < spec.n_samples {
        let latent = draw_latent(spec, &leans, &mut rng);
        if let Some(q) = quota {
            if filled[latent.side.index()] >= q[latent.side.index()] {
                continue;
            }
        }
        filled[latent.side.index()] += 1;

        let planted = spec.planted.as_ref().filter(|p| rng.gen::<f64>() < p.fraction);
        let feature: Vec<f32> = match planted {
            Some(p) => planted_center
                .iter()
                .map(|&c| c + (normal(&mut rng) * p.spread) as f32)
                .collect(),
            None => image_feature(spec, &appearance[latent.topic], latent.cue, &mut rng),
        };
        let text = article(spec, latent.topic, planted.map(|p| p.word.as_str()), &mut rng);
        let side_code = latent.side.code();
        let source = format!("source-{side_code}{}", rng.gen_range(0..spec.sources_per_side));
        let id = format!("{}-{:0width$}", spec.id_prefix, samples.len());
        samples.push(Sample::new(
            id,
            feature,
            latent.side,
            source,
            [format!("topic{}", latent.topic)],
            text,
        ));
    }
    Corpus::new(spec.feature_dim(), samples)
}

fn draw_latent(spec: &SyntheticSpec, leans: &[f64], rng: &mut seed::Rng) -> Latent {
    let topic = rng.gen_range(0..spec.n_topics);
    let cue = normal(rng);
    let stance = if spec.lean_weight * leans[topic] + spec.cue_weight * cue > 0.0 {
        SideLabel::Right
    } else {
        SideLabel::Left
    };
    let side = if rng.gen::<f64>() < spec.label_correlation {
        stance
    } else {
        stance.opposite()
    };
    Latent { topic, cue, side }
}

fn image_feature(spec: &SyntheticSpec, appearance: &[f64], cue: f64, rng: &mut seed::Rng) -> Vec<f32> {
    let mut f = Vec::with_capacity(spec.feature_dim());
    f.extend(appearance.iter().map(|&a| (a + spec.noise * normal(rng)) as f32));
    f.push((spec.cue_scale * cue + spec.noise * spec.cue_scale * normal(rng)) as f32);
    f.extend((0..spec.nuisance_dims).map(|_| (spec.nuisance_scale * normal(rng)) as f32));
    f
}

fn article(spec: &SyntheticSpec, topic: usize, planted: Option<&str>, rng: &mut seed::Rng) -> String {
    let mut sentences = Vec::with_capacity(spec.filler_sentences + 1);
    for s in 0..spec.filler_sentences {
        let mut words: Vec<String> = (0..spec.sentence_length)
            .map(|_| format!("g{}", rng.gen_range(0..spec.generic_words)))
            .collect();
        if s == 0 {
            if let Some(w) = planted {
                words.insert(rng.gen_range(0..=words.len()), w.to_string());
            }
        }
        sentences.push(words.join(" "));
    }
    let topic_sentence: Vec<String> = (0..spec.sentence_length)
        .map(|_| {
            if rng.gen::<f64>() < spec.topic_rate {
                format!("t{topic}w{}", rng.gen_range(0..spec.topic_words))
            } else {
                format!("g{}", rng.gen_range(0..spec.generic_words))
            }
        })
        .collect();
    sentences.push(topic_sentence.join(" "));
    if spec.filler_sentences == 0 {
        if let Some(w) = planted {
            sentences[0] = format!("{w} {}", sentences[0]);
        }
    }
    let mut text = sentences.join(". ");
    text.push('.');
    text
}

/// Two topics with disjoint vocabularies, `vocab / 2` words each, named
/// `a{i}` and `b{i}`. Topic A documents are labeled Left.
pub fn two_topic_corpus(n_docs: usize, vocab: usize, doc_len: usize, seed_value: u64) -> Result<Corpus> {
    if vocab < 2 || n_docs < 2 || doc_len == 0 {
        return Err(Error::invalid("two-topic corpus needs vocab ≥ 2, n_docs ≥ 2 and doc_len ≥ 1"));
    }
    let per_topic = vocab / 2;
    let mut rng = seed::named_rng(seed_value, "synth/two-topic");
    let samples = (0..n_docs)
        .map(|i| {
            let side = SideLabel::from_index(i % 2);
            let prefix = if side == SideLabel::Left { 'a' } else { 'b' };
            let words: Vec<String> = (0..doc_len)
                .map(|_| format!("{prefix}{}", rng.gen_range(0..per_topic)))
                .collect();
            Sample::new(
                format!("doc-{i:04}"),
                vec![0.0],
                side,
                format!("source-{}", side.code()),
                [format!("topic-{prefix}")],
                words.join(" "),
            )
        })
        .collect();
    Corpus::new(1, samples)
}

/// `groups` clusters of `copies` near-identical samples plus `distractors`
/// spread-out singletons. Each copy sits within Euclidean distance
/// `max_offset` of its group center, so any two copies are closer than
/// `2 · max_offset`. Group members are ids `g{group}-c{copy}`, distractors
/// `d{index}`.
pub fn planted_duplicates(
    groups: usize,
    copies: usize,
    distractors: usize,
    dim: usize,
    max_offset: f64,
    seed_value: u64,
) -> Result<Corpus> {
    if dim == 0 || !(max_offset >= 0.0) {
        return Err(Error::invalid("planted duplicates need dim ≥ 1 and max_offset ≥ 0"));
    }
    let mut rng = seed::named_rng(seed_value, "synth/duplicates");
    let spread = 10.0;
    let mut samples = Vec::with_capacity(groups * copies + distractors);
    for g in 0..groups {
        let center: Vec<f64> = (0..dim).map(|_| normal(&mut rng) * spread).collect();
        for c in 0..copies {
            let dir: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
            let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let radius = max_offset * rng.gen::<f64>();
            let feature = center
                .iter()
                .zip(&dir)
                .map(|(m, d)| (m + d / len * radius) as f32)
                .collect();
            let side = SideLabel::from_index(rng.gen_range(0..2));
            samples.push(Sample::new(
                format!("g{g:03}-c{c}"),
                feature,
                side,
                format!("source-{}", side.code()),
                Vec::new(),
                "",
            ));
        }
    }
    for d in 0..distractors {
        let feature = (0..dim).map(|_| (normal(&mut rng) * spread) as f32).collect();
        let side = SideLabel::from_index(rng.gen_range(0..2));
        samples.push(Sample::new(
            format!("d{d:04}"),
            feature,
            side,
            format!("source-{}", side.code()),
            Vec::new(),
            "",
        ));
    }
    Corpus::new(dim, samples)
}
