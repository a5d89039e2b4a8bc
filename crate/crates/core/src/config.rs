//! Run configuration: a TOML (or JSON) file with one section per stage.
//!
//! Precedence is command-line flag, then config file, then built-in default.
//! The root seed additionally falls back to `WEAKBIAS_SEED` before the
//! default of 0. Seeds inside the stage sections are ignored: every stage
//! derives its own seed from the root through [`seed::derive`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{ClassifierConfig, TrainSpec};
use crate::dedup::HnswParams;
use crate::doc2vec::PvdmConfig;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::seed;

pub const SEED_ENV: &str = "WEAKBIAS_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub test_corpus: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            test_corpus: None,
            embeddings: None,
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Squared Euclidean distance below which two samples are duplicates.
    pub threshold: Option<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordsConfig {
    pub top_frequent: usize,
    pub keep: usize,
    pub train: TrainSpec,
}

impl Default for WordsConfig {
    fn default() -> Self {
        Self {
            top_frequent: 10_000,
            keep: 1_000,
            train: TrainSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub doc2vec: PvdmConfig,
    pub hnsw: HnswParams,
    pub dedup: DedupConfig,
    pub classifier: ClassifierConfig,
    pub stage1: TrainSpec,
    pub stage2: TrainSpec,
    pub words: WordsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

impl ConfigFormat {
    /// JSON for `.json` files, TOML otherwise.
    pub fn of_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => ConfigFormat::Json,
            _ => ConfigFormat::Toml,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, format: ConfigFormat) -> Result<Self> {
        let parsed = match format {
            ConfigFormat::Toml => toml::from_str(text).map_err(|e| Error::invalid(format!("config: {}", e.message()))),
            ConfigFormat::Json => serde_json::from_str(text).map_err(|e| Error::invalid(format!("config: {e}"))),
        }?;
        Ok(parsed)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, ConfigFormat::of_path(path))
    }

    pub fn dump(&self, format: ConfigFormat) -> Result<String> {
        match format {
            ConfigFormat::Toml => toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}"))),
            ConfigFormat::Json => serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("config: {e}"))),
        }
    }

    /// Applies `section.key=value` overrides. Values are read as TOML
    /// literals, falling back to a bare string.
    pub fn with_overrides<'a>(&self, overrides: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut tree = serde_json::to_value(self).map_err(|e| Error::invalid(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {item:?} is not key=value")))?;
            set_path(&mut tree, key.trim(), literal(raw.trim())?)?;
        }
        serde_json::from_value(tree).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Flag, then file, then `WEAKBIAS_SEED`, then 0.
    pub fn root_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    /// Checks stage settings and that every configured input path exists.
    pub fn validate(&self) -> Result<()> {
        self.pipeline_unseeded().validate()?;
        self.hnsw.validate()?;
        self.words.train.validate()?;
        if let Some(t) = self.dedup.threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid("dedup.threshold must be finite and non-negative"));
            }
        }
        let inputs = [&self.paths.corpus, &self.paths.test_corpus, &self.paths.embeddings];
        for p in inputs.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "configured input does not exist"),
                ));
            }
        }
        Ok(())
    }

    fn pipeline_unseeded(&self) -> PipelineConfig {
        PipelineConfig {
            doc2vec: self.doc2vec.clone(),
            classifier: self.classifier.clone(),
            stage1: self.stage1.clone(),
            stage2: self.stage2.clone(),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(self.pipeline_unseeded().with_root_seed(self.root_seed()?))
    }

    pub fn hnsw_params(&self) -> Result<HnswParams> {
        Ok(HnswParams {
            seed: self.derived_seed("dedup")?,
            ..self.hnsw.clone()
        })
    }

    pub fn words_spec(&self) -> Result<TrainSpec> {
        Ok(TrainSpec {
            seed: self.derived_seed("words")?,
            ..self.words.train.clone()
        })
    }

    pub fn derived_seed(&self, name: &str) -> Result<u64> {
        Ok(seed::derive(self.root_seed()?, name))
    }
}

fn literal(raw: &str) -> Result<Value> {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v")).map_err(|e| Error::invalid(e.to_string())),
        Err(_) => Ok(Value::String(raw.to_string())),
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("config key {key:?}: {part:?} is not a section")))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    Err(Error::invalid("empty config key"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassWeighting;

    fn custom() -> RunConfig {
        RunConfig {
            seed: Some(42),
            paths: Paths {
                corpus: Some("data/train.jsonl".into()),
                ..Paths::default()
            },
            dedup: DedupConfig { threshold: Some(0.25) },
            stage1: TrainSpec {
                lr: 3e-4,
                epochs: 7,
                class_weighting: ClassWeighting::Uniform,
                ..TrainSpec::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn dump_reparses_to_equal_config() {
        for config in [RunConfig::default(), custom()] {
            for format in [ConfigFormat::Toml, ConfigFormat::Json] {
                let text = config.dump(format).unwrap();
                assert_eq!(RunConfig::parse(&text, format).unwrap(), config, "{format:?}\n{text}");
            }
        }
    }

    #[test]
    fn sections_and_defaults() {
        let c = RunConfig::parse("seed = 5\n[stage1]\nepochs = 3\n[dedup]\nthreshold = 1.5\n", ConfigFormat::Toml).unwrap();
        assert_eq!(c.seed, Some(5));
        assert_eq!(c.stage1.epochs, 3);
        assert_eq!(c.stage1.lr, TrainSpec::default().lr);
        assert_eq!(c.dedup.threshold, Some(1.5));
        assert!(RunConfig::parse("[stage1]\nepoch = 3\n", ConfigFormat::Toml).is_err());
        assert!(RunConfig::parse("{\"stage9\": {}}", ConfigFormat::Json).is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let c = custom()
            .with_overrides(["stage1.epochs=2", "seed=9", "paths.reports=out", "stage2.class_weighting=uniform"])
            .unwrap();
        assert_eq!(c.stage1.epochs, 2);
        assert_eq!(c.stage1.lr, 3e-4);
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.paths.reports, PathBuf::from("out"));
        assert_eq!(c.stage2.class_weighting, ClassWeighting::Uniform);
        assert!(custom().with_overrides(["stage1.nope=1"]).is_err());
        assert!(custom().with_overrides(["stage1"]).is_err());
    }

    #[test]
    fn stages_get_distinct_named_seeds() {
        let c = custom();
        let p = c.pipeline().unwrap();
        assert_eq!(p.stage1.seed, seed::derive(42, "stage1"));
        let seeds = [p.doc2vec.seed, p.stage1.seed, p.stage2.seed, c.hnsw_params().unwrap().seed, c.words_spec().unwrap().seed];
        let distinct: std::collections::BTreeSet<u64> = seeds.iter().copied().collect();
        assert_eq!(distinct.len(), seeds.len());
    }

    #[test]
    fn validation_reports_missing_inputs() {
        let err = custom().validate().unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Input);
        assert!(RunConfig::default().validate().is_ok());
    }
}
