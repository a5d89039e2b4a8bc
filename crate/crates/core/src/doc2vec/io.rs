//! `PVDM` model files.
//!
//! ```text
//! "PVDM" | version u32 | dim u32 | n_words u32 | n_docs u32
//! n_words × (len u32 | utf-8 bytes | count u64)
//! word matrix | node matrix | doc matrix        (f32, row-major)
//! [config trailer: window u32 | epochs u32 | min_count u64 |
//!  initial_lr f64 | final_lr f64 | seed u64 | infer_steps u32]
//! ```
//!
//! All integers and floats little-endian. The Huffman tree is rebuilt from
//! the stored counts. A file that ends after the matrices loads with default
//! training settings for the stored dimension.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{PvdmConfig, PvdmModel};

pub const PVDM_MAGIC: &[u8; 4] = b"PVDM";
pub const PVDM_VERSION: u32 = 1;

pub fn write_model(model: &PvdmModel, writer: impl Write) -> std::io::Result<()> {
    let mut w = Writer::new(writer);
    w.bytes(PVDM_MAGIC)?;
    w.u32(PVDM_VERSION)?;
    w.u32(model.dim() as u32)?;
    w.u32(model.vocab.len() as u32)?;
    w.u32(model.n_docs() as u32)?;
    for (word, &count) in model.vocab.words().iter().zip(model.vocab.counts()) {
        w.string(word)?;
        w.u64(count)?;
    }
    w.f32s(model.word_vectors.as_slice())?;
    w.f32s(model.node_vectors.as_slice())?;
    w.f32s(model.doc_vectors.as_slice())?;
    let c = &model.config;
    w.u32(c.window as u32)?;
    w.u32(c.epochs as u32)?;
    w.u64(c.min_count)?;
    w.f64(c.initial_lr)?;
    w.f64(c.final_lr)?;
    w.u64(c.seed)?;
    w.u32(c.infer_steps as u32)?;
    w.finish()
}

pub fn read_model(reader: impl Read) -> Result<PvdmModel> {
    let mut r = Reader::new(reader);
    r.magic(PVDM_MAGIC)?;
    let version = r.u32()?;
    if version != PVDM_VERSION {
        return Err(Error::Format(format!("unsupported PVDM version {version}")));
    }
    let dim = r.u32()? as usize;
    let n_words = r.u32()? as usize;
    let n_docs = r.u32()? as usize;
    let mut pairs = Vec::with_capacity(n_words.min(1 << 20));
    for _ in 0..n_words {
        let word = r.string()?;
        let count = r.u64()?;
        pairs.push((word, count));
    }
    let n_nodes = n_words.saturating_sub(1);
    let word_vectors = Matrix::from_vec(n_words, dim, r.f32s(n_words * dim)?);
    let node_vectors = Matrix::from_vec(n_nodes, dim, r.f32s(n_nodes * dim)?);
    let doc_vectors = Matrix::from_vec(n_docs, dim, r.f32s(n_docs * dim)?);

    let mut config = PvdmConfig {
        dim,
        ..PvdmConfig::default()
    };
    if !r.at_end()? {
        config.window = r.u32()? as usize;
        config.epochs = r.u32()? as usize;
        config.min_count = r.u64()?;
        config.initial_lr = r.f64()?;
        config.final_lr = r.f64()?;
        config.seed = r.u64()?;
        config.infer_steps = r.u32()? as usize;
        if !r.at_end()? {
            return Err(Error::Format("trailing bytes after PVDM config".into()));
        }
    }

    let vocab = if n_words == 0 {
        Vocabulary::empty()
    } else {
        let observed = pairs.iter().map(|p| p.1).min().unwrap_or(1);
        let min_count = config.min_count.min(observed).max(1);
        let vocab = Vocabulary::from_counts(pairs.clone(), min_count)?;
        if vocab.len() != n_words || vocab.words().iter().zip(&pairs).any(|(a, b)| *a != b.0) {
            return Err(Error::Format("vocabulary block is not in canonical order".into()));
        }
        vocab
    };
    Ok(PvdmModel {
        vocab,
        word_vectors,
        node_vectors,
        doc_vectors,
        config,
    })
}

pub fn save_model(model: &PvdmModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PvdmModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}
