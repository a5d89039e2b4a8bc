//! `WBCK` classifier checkpoints.
//!
//! ```text
//! "WBCK" | version u32 | depth u32 | flags u32 (1 = head2, 2 = word head)
//! layer shapes: (input u32 | output u32) for trunk.., fusion, head1, [head2], [word head]
//! [n_words u32 | n_words × (len u32 | utf-8 bytes)]
//! per layer in the same order: weight (output × input) | bias, f32 row-major
//! ```
//!
//! Little-endian throughout, like the `PVDM` format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{BiasModel, Dense, WordHead};

pub const WBCK_MAGIC: &[u8; 4] = b"WBCK";
pub const WBCK_VERSION: u32 = 1;

const HAS_HEAD2: u32 = 1;
const HAS_WORDS: u32 = 2;

fn layers(model: &BiasModel) -> Vec<&Dense> {
    let mut out: Vec<&Dense> = model.trunk.iter().collect();
    out.push(&model.fusion);
    out.push(&model.head1);
    out.extend(model.head2.as_ref());
    out.extend(model.word_head.as_ref().map(|w| &w.layer));
    out
}

pub fn write_checkpoint(model: &BiasModel, writer: impl Write) -> std::io::Result<()> {
    let mut w = Writer::new(writer);
    w.bytes(WBCK_MAGIC)?;
    w.u32(WBCK_VERSION)?;
    w.u32(model.trunk.len() as u32)?;
    let flags = if model.head2.is_some() { HAS_HEAD2 } else { 0 } | if model.word_head.is_some() { HAS_WORDS } else { 0 };
    w.u32(flags)?;
    let all = layers(model);
    for l in &all {
        w.u32(l.input_dim() as u32)?;
        w.u32(l.output_dim() as u32)?;
    }
    if let Some(head) = &model.word_head {
        w.u32(head.words.len() as u32)?;
        for word in &head.words {
            w.string(word)?;
        }
    }
    for l in &all {
        w.f32s(l.weight.as_slice())?;
        w.f32s(&l.bias)?;
    }
    w.finish()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn read_checkpoint(reader: impl Read) -> Result<BiasModel> {
    let mut r = Reader::new(reader);
    r.magic(WBCK_MAGIC)?;
    let version = r.u32()?;
    if version != WBCK_VERSION {
        return Err(bad(format!("unsupported WBCK version {version}")));
    }
    let depth = r.u32()? as usize;
    let flags = r.u32()?;
    if depth == 0 || flags & !(HAS_HEAD2 | HAS_WORDS) != 0 {
        return Err(bad("invalid depth or flags"));
    }
    let n_layers = depth + 2 + (flags & HAS_HEAD2 != 0) as usize + (flags & HAS_WORDS != 0) as usize;
    let mut shapes = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }

    for i in 1..depth {
        if shapes[i].0 != shapes[i - 1].1 {
            return Err(bad("trunk layer shapes do not chain"));
        }
    }
    let trunk_dim = shapes[depth - 1].1;
    let fused = shapes[depth].1;
    if shapes[depth].0 < trunk_dim || shapes[depth + 1] != (fused, 2) {
        return Err(bad("fusion or stage-1 head shape inconsistent with trunk"));
    }
    let mut next = depth + 2;
    if flags & HAS_HEAD2 != 0 {
        if shapes[next] != (trunk_dim, 2) {
            return Err(bad("stage-2 head shape inconsistent with trunk"));
        }
        next += 1;
    }
    let words = if flags & HAS_WORDS != 0 {
        if shapes[next].0 != fused {
            return Err(bad("word head shape inconsistent with fusion layer"));
        }
        let n = r.u32()? as usize;
        if n != shapes[next].1 {
            return Err(bad("word list length differs from word head width"));
        }
        (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut dense = Vec::with_capacity(n_layers);
    for &(input, output) in &shapes {
        let weight = Matrix::from_vec(output, input, r.f32s(input * output)?);
        let bias = r.f32s(output)?;
        dense.push(Dense { weight, bias });
    }
    if !r.at_end()? {
        return Err(bad("trailing bytes after checkpoint"));
    }

    let mut it = dense.into_iter();
    let trunk: Vec<Dense> = it.by_ref().take(depth).collect();
    let fusion = it.next().expect("counted");
    let head1 = it.next().expect("counted");
    let head2 = if flags & HAS_HEAD2 != 0 { it.next() } else { None };
    let word_head = if flags & HAS_WORDS != 0 {
        it.next().map(|layer| WordHead { words, layer })
    } else {
        None
    };
    Ok(BiasModel {
        trunk,
        fusion,
        head1,
        head2,
        word_head,
    })
}

pub fn save_checkpoint(model: &BiasModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BiasModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
