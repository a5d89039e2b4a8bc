//! Document embeddings keyed by sample id, stored as JSON lines
//! `{"id": ..., "embedding": [...]}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::doc2vec::PvdmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    id: String,
    embedding: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Training-document vectors of `model`, row `i` belonging to sample `i`
    /// of the corpus it was trained on.
    pub fn from_model(model: &PvdmModel, corpus: &Corpus) -> Result<Self> {
        if model.n_docs() != corpus.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                found: model.n_docs(),
            });
        }
        let mut table = Self::new(model.dim());
        for (i, s) in corpus.iter().enumerate() {
            table.insert(s.id.clone(), model.doc_vectors.row(i).to_vec())?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Adds or replaces the embedding for `id`.
    pub fn insert(&mut self, id: String, embedding: Vec<f32>) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: embedding.len(),
            });
        }
        match self.index.get(&id) {
            Some(&i) => self.vectors[i] = embedding,
            None => {
                self.index.insert(id.clone(), self.ids.len());
                self.ids.push(id);
                self.vectors.push(embedding);
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn require(&self, id: &str) -> Result<&[f32]> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            let t = table.get_or_insert_with(|| Self::new(parsed.embedding.len()));
            t.insert(parsed.id, parsed.embedding).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(table.unwrap_or_default())
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        for (id, v) in self.ids.iter().zip(&self.vectors) {
            let line = serde_json::to_string(&Line {
                id: id.clone(),
                embedding: v.clone(),
            })?;
            writeln!(writer, "{line}")?;
        }
        writer.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}
