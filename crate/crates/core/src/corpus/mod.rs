//! Image-article corpus: ingestion, tokenization, weak labels and splits.

mod vocab;

pub use vocab::{build_vocabulary, Vocabulary};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const CORPUS_FORMAT: &str = "weakbias-corpus";
pub const CORPUS_VERSION: u32 = 1;

/// Political leaning inherited from the publishing source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SideLabel {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl SideLabel {
    pub const BOTH: [SideLabel; 2] = [SideLabel::Left, SideLabel::Right];

    /// Logit / class index: Left = 0, Right = 1.
    pub fn index(self) -> usize {
        match self {
            SideLabel::Left => 0,
            SideLabel::Right => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            SideLabel::Left
        } else {
            SideLabel::Right
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            SideLabel::Left => "L",
            SideLabel::Right => "R",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            SideLabel::Left => SideLabel::Right,
            SideLabel::Right => SideLabel::Left,
        }
    }
}

impl fmt::Display for SideLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub feature: Vec<f32>,
    pub tokens: Vec<String>,
    pub side: SideLabel,
    pub source: String,
    pub topics: BTreeSet<String>,
    pub raw_text: String,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        feature: Vec<f32>,
        side: SideLabel,
        source: impl Into<String>,
        topics: impl IntoIterator<Item = String>,
        raw_text: impl Into<String>,
    ) -> Self {
        let raw_text = raw_text.into();
        Self {
            id: id.into(),
            feature,
            tokens: tokenize(&raw_text),
            side,
            source: source.into(),
            topics: topics.into_iter().collect(),
            raw_text,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub feature_dim: usize,
    pub samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    source: String,
    side: SideLabel,
    topics: Vec<String>,
    text: String,
    feature: Vec<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    source: &'a str,
    side: SideLabel,
    topics: &'a BTreeSet<String>,
    text: &'a str,
    feature: &'a [f32],
}

impl Corpus {
    pub fn new(feature_dim: usize, samples: Vec<Sample>) -> Result<Self> {
        let corpus = Self {
            feature_dim,
            samples,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            if s.feature.len() != self.feature_dim {
                return Err(Error::FeatureLength {
                    id: s.id.clone(),
                    expected: self.feature_dim,
                    found: s.feature.len(),
                });
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    pub fn side_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for s in &self.samples {
            counts[s.side.index()] += 1;
        }
        counts
    }

    pub fn sources(&self) -> BTreeSet<&str> {
        self.samples.iter().map(|s| s.source.as_str()).collect()
    }

    /// Samples satisfying `keep`, same feature dimension.
    pub fn filtered(&self, mut keep: impl FnMut(&Sample) -> bool) -> Corpus {
        Corpus {
            feature_dim: self.feature_dim,
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Replace every article by its first `k` sentences and re-tokenize.
    pub fn truncated(&self, k: usize) -> Corpus {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let text = truncate_sentences(&s.raw_text, k);
                Sample {
                    tokens: tokenize(&text),
                    raw_text: text,
                    ..s.clone()
                }
            })
            .collect();
        Corpus {
            feature_dim: self.feature_dim,
            samples,
        }
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::Parse { line: 1, message: "missing header".into() }),
                Some((i, line)) => {
                    let line = line.map_err(|e| parse_err(i + 1, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
                }
            }
        };
        if header.format != CORPUS_FORMAT || header.version != CORPUS_VERSION {
            return Err(Error::Format(format!(
                "expected {CORPUS_FORMAT} v{CORPUS_VERSION}, found {} v{}",
                header.format, header.version
            )));
        }
        let feature_dim = header.feature_dim;
        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(|e| parse_err(line_no, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| parse_err(line_no, e))?;
            if record.feature.len() != feature_dim {
                return Err(Error::Parse {
                    line: line_no,
                    message: Error::FeatureLength {
                        id: record.id,
                        expected: feature_dim,
                        found: record.feature.len(),
                    }
                    .to_string(),
                });
            }
            if !seen.insert(record.id.clone()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: Error::DuplicateId(record.id).to_string(),
                });
            }
            let feature = record.feature.iter().map(|&x| x as f32).collect();
            samples.push(Sample::new(
                record.id,
                feature,
                record.side,
                record.source,
                record.topics,
                record.text,
            ));
        }
        Ok(Corpus {
            feature_dim,
            samples,
        })
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        let header = Header {
            format: CORPUS_FORMAT.into(),
            version: CORPUS_VERSION,
            feature_dim: self.feature_dim,
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for s in &self.samples {
            let record = RecordOut {
                id: &s.id,
                source: &s.source,
                side: s.side,
                topics: &s.topics,
                text: &s.raw_text,
                feature: &s.feature,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

fn parse_err(line: usize, e: impl fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::read_from(BufReader::new(file))
}

/// Lowercased alphanumeric runs; a `#` directly in front of a run stays
/// attached to it.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    let lowered = raw_text.to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut pending_hash = false;
    for c in lowered.chars() {
        if c.is_alphanumeric() {
            if current.is_empty() && pending_hash {
                current.push('#');
            }
            current.push(c);
            pending_hash = false;
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            pending_hash = c == '#';
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// First `k` sentences of `raw_text`. A sentence ends at `.`, `!` or `?`
/// followed by whitespace or end of text, so abbreviations split early.
pub fn truncate_sentences(raw_text: &str, k: usize) -> String {
    if k == 0 {
        return String::new();
    }
    let mut seen = 0;
    let mut chars = raw_text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                seen += 1;
                if seen == k {
                    return raw_text[..i + c.len_utf8()].to_string();
                }
            }
        }
    }
    raw_text.to_string()
}

/// Inverse-frequency class weights, `N / (2 N_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weight_left: f64,
    pub weight_right: f64,
}

impl ClassWeights {
    pub const UNIFORM: ClassWeights = ClassWeights {
        weight_left: 1.0,
        weight_right: 1.0,
    };

    pub fn get(&self, side: SideLabel) -> f64 {
        match side {
            SideLabel::Left => self.weight_left,
            SideLabel::Right => self.weight_right,
        }
    }
}

impl Default for ClassWeights {
    fn default() -> Self {
        Self::UNIFORM
    }
}

pub fn class_weights(corpus: &Corpus) -> Result<ClassWeights> {
    let [left, right] = corpus.side_counts();
    if left == 0 {
        return Err(Error::MissingClass("L"));
    }
    if right == 0 {
        return Err(Error::MissingClass("R"));
    }
    let total = (left + right) as f64;
    Ok(ClassWeights {
        weight_left: total / (2.0 * left as f64),
        weight_right: total / (2.0 * right as f64),
    })
}

/// Stratified, seeded train/test split. Both halves keep file order.
pub fn split(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut in_test = vec![false; corpus.len()];
    for side in SideLabel::BOTH {
        let mut members: Vec<usize> = corpus
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.side == side)
            .map(|(i, _)| i)
            .collect();
        let n_test = (members.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == members.len() {
            return Err(Error::invalid(format!(
                "test_fraction {test_fraction} leaves side {side} empty in one split"
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..n_test] {
            in_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, &t) in corpus.samples.iter().zip(&in_test) {
        if t {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((
        Corpus { feature_dim: corpus.feature_dim, samples: train },
        Corpus { feature_dim: corpus.feature_dim, samples: test },
    ))
}
