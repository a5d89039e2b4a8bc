//! Corpus to stage-2 model: doc2vec, stage 1, stage 2.

use serde::{Deserialize, Serialize};

use crate::classifier::{self, BiasModel, ClassifierConfig, EmbeddingTable, TrainSpec};
use crate::corpus::Corpus;
use crate::doc2vec::{self, PvdmConfig, PvdmModel};
use crate::error::{Error, Result};
use crate::observe::Observer;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub doc2vec: PvdmConfig,
    pub classifier: ClassifierConfig,
    pub stage1: TrainSpec,
    pub stage2: TrainSpec,
}

impl PipelineConfig {
    /// Seeds every stage from `root` through named sub-seeds.
    pub fn with_root_seed(mut self, root: u64) -> Self {
        self.doc2vec.seed = seed::derive(root, "doc2vec");
        self.stage1.seed = seed::derive(root, "stage1");
        self.stage2.seed = seed::derive(root, "stage2");
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.doc2vec.validate()?;
        self.classifier.validate()?;
        self.stage1.validate()?;
        self.stage2.validate()?;
        if self.classifier.text_dim != self.doc2vec.dim {
            return Err(Error::invalid(format!(
                "classifier.text_dim {} differs from doc2vec.dim {}",
                self.classifier.text_dim, self.doc2vec.dim
            )));
        }
        Ok(())
    }

    /// Settings for the image-only baseline: stage-1 optimizer, both
    /// stages' epochs.
    pub fn baseline_spec(&self) -> TrainSpec {
        TrainSpec {
            epochs: self.stage1.epochs + self.stage2.epochs,
            ..self.stage1.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineModels {
    pub text: PvdmModel,
    pub embeddings: EmbeddingTable,
    pub stage1: BiasModel,
    pub stage2: BiasModel,
}

pub fn run_pipeline(train: &Corpus, config: &PipelineConfig, observer: &mut dyn Observer) -> Result<PipelineModels> {
    config.validate()?;
    let text = doc2vec::train_pvdm_with(train, &config.doc2vec, observer)?;
    let embeddings = EmbeddingTable::from_model(&text, train)?;
    let stage1 = classifier::train_stage1_with(train, &embeddings, &config.classifier, &config.stage1, observer)?;
    let stage2 = classifier::train_stage2_with(&stage1, train, &config.stage2, observer)?;
    Ok(PipelineModels {
        text,
        embeddings,
        stage1,
        stage2,
    })
}

/// Same trunk and head shape as stage 2, trained on images alone.
pub fn image_only_baseline(train: &Corpus, config: &PipelineConfig, observer: &mut dyn Observer) -> Result<BiasModel> {
    config.validate()?;
    classifier::train_image_only(train, &config.classifier, &config.baseline_spec(), observer)
}
