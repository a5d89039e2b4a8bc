//! Multi-worker training where workers read and write the shared vectors
//! without mutual exclusion. Lost updates are tolerated; the result is not
//! reproducible but stays finite and close in loss to serial training.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::linalg::{log_sigmoid, sigmoid, Matrix, Real};
use crate::observe::{EpochLog, Observer};

use super::{fill_window, PvdmModel};

struct Shared {
    dim: usize,
    data: Vec<AtomicU64>,
}

impl Shared {
    fn from_matrix<T: Real>(m: &Matrix<T>) -> Self {
        Self {
            dim: m.cols(),
            data: m
                .as_slice()
                .iter()
                .map(|x| AtomicU64::new(x.f64().to_bits()))
                .collect(),
        }
    }

    fn into_matrix<T: Real>(self, rows: usize) -> Matrix<T> {
        let data = self
            .data
            .into_iter()
            .map(|a| T::of(f64::from_bits(a.into_inner())))
            .collect();
        Matrix::from_vec(rows, self.dim, data)
    }

    #[inline]
    fn get(&self, row: usize, j: usize) -> f64 {
        f64::from_bits(self.data[row * self.dim + j].load(Ordering::Relaxed))
    }

    #[inline]
    fn read_add(&self, row: usize, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o += self.get(row, j);
        }
    }

    /// Unsynchronized read-modify-write; concurrent writers may overwrite
    /// each other.
    #[inline]
    fn add(&self, row: usize, alpha: f64, x: &[f64]) {
        for (j, &v) in x.iter().enumerate() {
            let cell = &self.data[row * self.dim + j];
            let cur = f64::from_bits(cell.load(Ordering::Relaxed));
            cell.store((cur + alpha * v).to_bits(), Ordering::Relaxed);
        }
    }
}

pub(super) fn train<T: Real>(
    model: &mut PvdmModel<T>,
    docs: &[Vec<u32>],
    observer: &mut dyn Observer,
) -> Result<()> {
    let config = model.config.clone();
    let workers = config.workers.max(1);
    let words = Shared::from_matrix(&model.word_vectors);
    let nodes = Shared::from_matrix(&model.node_vectors);
    let documents = Shared::from_matrix(&model.doc_vectors);
    let per_epoch: usize = docs.iter().map(Vec::len).sum();
    let total = per_epoch * config.epochs;
    let skipped = docs.iter().filter(|d| d.is_empty()).count();
    let done = AtomicUsize::new(0);
    let vocab = &model.vocab;
    let chunk = docs.len().div_ceil(workers).max(1);

    for epoch in 0..config.epochs {
        let loss_sum: f64 = std::thread::scope(|scope| {
            let handles: Vec<_> = docs
                .chunks(chunk)
                .enumerate()
                .map(|(c, part)| {
                    let (words, nodes, documents, done, config) =
                        (&words, &nodes, &documents, &done, &config);
                    scope.spawn(move || {
                        let dim = config.dim;
                        let mut ctx = vec![0.0f64; dim];
                        let mut neu = vec![0.0f64; dim];
                        let mut node_row = vec![0.0f64; dim];
                        let mut window = Vec::new();
                        let mut loss = 0.0;
                        for (offset, doc) in part.iter().enumerate() {
                            let d = c * chunk + offset;
                            for t in 0..doc.len() {
                                let lr = config.lr_at(done.fetch_add(1, Ordering::Relaxed), total);
                                fill_window(doc, t, config.window, &mut window);
                                ctx.iter_mut().for_each(|x| *x = 0.0);
                                documents.read_add(d, &mut ctx);
                                for &w in &window {
                                    words.read_add(w as usize, &mut ctx);
                                }
                                let scale = 1.0 / (window.len() + 1) as f64;
                                ctx.iter_mut().for_each(|x| *x *= scale);
                                neu.iter_mut().for_each(|x| *x = 0.0);
                                let target = doc[t] as usize;
                                for (&bit, &node) in vocab.code(target).iter().zip(vocab.path(target)) {
                                    let node = node as usize;
                                    node_row.iter_mut().for_each(|x| *x = 0.0);
                                    nodes.read_add(node, &mut node_row);
                                    let f: f64 = ctx.iter().zip(&node_row).map(|(a, b)| a * b).sum();
                                    loss -= log_sigmoid(if bit == 0 { f } else { -f });
                                    let g = (1.0 - bit as f64 - sigmoid(f)) * lr;
                                    neu.iter_mut().zip(&node_row).for_each(|(n, v)| *n += g * v);
                                    nodes.add(node, g, &ctx);
                                }
                                documents.add(d, scale, &neu);
                                for &w in &window {
                                    words.add(w as usize, scale, &neu);
                                }
                            }
                        }
                        loss
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .sum()
        });
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

    model.word_vectors = words.into_matrix(model.vocab.len());
    model.node_vectors = nodes.into_matrix(model.vocab.inner_nodes());
    model.doc_vectors = documents.into_matrix(docs.len());
    Ok(())
}
