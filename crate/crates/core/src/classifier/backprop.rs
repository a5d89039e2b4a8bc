//! Losses and their analytic gradients for each training mode.

use crate::corpus::SideLabel;
use crate::linalg::{log_sigmoid, sigmoid, Real};

use super::{relu_in_place, softmax, BiasModel, Dense};

/// What is being trained, which decides the forward graph and which layers
/// receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `head1 ∘ fusion ∘ (trunk, text)`; trunk, fusion and head1 trainable.
    Stage1,
    /// `head2 ∘ trunk`; only head2 trainable.
    Stage2,
    /// `head2 ∘ trunk`; trunk and head2 trainable.
    ImageOnly,
    /// `word_head ∘ fusion ∘ (trunk, text)`; trunk, fusion and word head trainable.
    Words,
}

/// One training item. `doc` is required by the text-conditioned modes and
/// `targets` (0/1 per word) by [`Mode::Words`].
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub feature: &'a [T],
    pub doc: Option<&'a [T]>,
    pub label: SideLabel,
    pub weight: T,
    pub targets: Option<&'a [u8]>,
}

impl<T: Real> BiasModel<T> {
    /// Layers updated in `mode`, in a fixed order shared with
    /// [`batch_gradients`].
    pub fn trainable(&self, mode: Mode) -> Vec<&Dense<T>> {
        let mut out: Vec<&Dense<T>> = Vec::new();
        match mode {
            Mode::Stage1 => {
                out.extend(self.trunk.iter());
                out.push(&self.fusion);
                out.push(&self.head1);
            }
            Mode::Stage2 => out.extend(self.head2.as_ref()),
            Mode::ImageOnly => {
                out.extend(self.trunk.iter());
                out.extend(self.head2.as_ref());
            }
            Mode::Words => {
                out.extend(self.trunk.iter());
                out.push(&self.fusion);
                out.extend(self.word_head.as_ref().map(|w| &w.layer));
            }
        }
        out
    }

    pub fn trainable_mut(&mut self, mode: Mode) -> Vec<&mut Dense<T>> {
        let mut out: Vec<&mut Dense<T>> = Vec::new();
        match mode {
            Mode::Stage1 => {
                out.extend(self.trunk.iter_mut());
                out.push(&mut self.fusion);
                out.push(&mut self.head1);
            }
            Mode::Stage2 => out.extend(self.head2.as_mut()),
            Mode::ImageOnly => {
                out.extend(self.trunk.iter_mut());
                out.extend(self.head2.as_mut());
            }
            Mode::Words => {
                out.extend(self.trunk.iter_mut());
                out.push(&mut self.fusion);
                out.extend(self.word_head.as_mut().map(|w| &mut w.layer));
            }
        }
        out
    }
}

struct Forward<T> {
    /// Trunk input followed by each trunk layer's output.
    trunk: Vec<Vec<T>>,
    /// `[trunk output; doc]`, text modes only.
    fusion_in: Vec<T>,
    fusion_out: Vec<T>,
    out: Vec<T>,
}

fn forward<T: Real>(model: &BiasModel<T>, mode: Mode, ex: &Example<'_, T>) -> Forward<T> {
    let mut trunk = vec![ex.feature.to_vec()];
    for layer in &model.trunk {
        let mut next = Vec::new();
        layer.forward(trunk.last().expect("input present"), &mut next);
        relu_in_place(&mut next);
        trunk.push(next);
    }
    let h = trunk.last().expect("input present");
    let mut fusion_in = Vec::new();
    let mut fusion_out = Vec::new();
    let mut out = Vec::new();
    match mode {
        Mode::Stage1 | Mode::Words => {
            fusion_in.extend_from_slice(h);
            fusion_in.extend_from_slice(ex.doc.expect("text mode needs a document embedding"));
            model.fusion.forward(&fusion_in, &mut fusion_out);
            relu_in_place(&mut fusion_out);
            let head = match mode {
                Mode::Stage1 => &model.head1,
                _ => &model.word_head.as_ref().expect("word head present").layer,
            };
            head.forward(&fusion_out, &mut out);
        }
        Mode::Stage2 | Mode::ImageOnly => {
            model.head2.as_ref().expect("stage-2 head present").forward(h, &mut out);
        }
    }
    Forward {
        trunk,
        fusion_in,
        fusion_out,
        out,
    }
}

/// `(unnormalized loss, d loss / d output)` for one example.
fn output_loss<T: Real>(mode: Mode, ex: &Example<'_, T>, out: &[T]) -> (T, Vec<T>) {
    match mode {
        Mode::Words => {
            let targets = ex.targets.expect("word mode needs targets");
            let mut loss = T::zero();
            let grad = out
                .iter()
                .zip(targets)
                .map(|(&z, &t)| {
                    let t = T::of(t as f64);
                    loss = loss - (t * log_sigmoid(z) + (T::one() - t) * log_sigmoid(-z));
                    sigmoid(z) - t
                })
                .collect();
            (loss, grad)
        }
        _ => {
            let logits = [out[0], out[1]];
            let y = ex.label.index();
            let m = logits[0].max(logits[1]);
            let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
            let p = softmax(logits);
            let mut grad = vec![p[0], p[1]];
            grad[y] = grad[y] - T::one();
            (ex.weight * (lse - logits[y]), grad.into_iter().map(|g| ex.weight * g).collect())
        }
    }
}

/// Normalizer of the batch loss: total class weight for the bias modes
/// (weighted mean, as in the usual weighted cross-entropy), batch size for
/// the word mode.
fn normalizer<T: Real>(mode: Mode, batch: &[Example<'_, T>]) -> T {
    match mode {
        Mode::Words => T::of(batch.len() as f64),
        _ => batch.iter().fold(T::zero(), |acc, ex| acc + ex.weight),
    }
}

pub fn batch_loss<T: Real>(model: &BiasModel<T>, mode: Mode, batch: &[Example<'_, T>]) -> T {
    let total = batch.iter().fold(T::zero(), |acc, ex| {
        let f = forward(model, mode, ex);
        acc + output_loss(mode, ex, &f.out).0
    });
    total / normalizer(mode, batch)
}

fn accumulate<T: Real>(layer: &Dense<T>, grad: &mut Dense<T>, input: &[T], dz: &[T], d_input: Option<&mut [T]>) {
    grad.weight.add_outer(T::one(), dz, input);
    for (b, &g) in grad.bias.iter_mut().zip(dz) {
        *b = *b + g;
    }
    if let Some(d) = d_input {
        d.iter_mut().for_each(|x| *x = T::zero());
        layer.weight.matvec_t_add(dz, d);
    }
}

fn mask_relu<T: Real>(d: &mut [T], activation: &[T]) {
    for (g, &a) in d.iter_mut().zip(activation) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Batch loss and its gradient for every layer in `model.trainable(mode)`.
pub fn batch_gradients<T: Real>(model: &BiasModel<T>, mode: Mode, batch: &[Example<'_, T>]) -> (T, Vec<Dense<T>>) {
    let shapes = model.trainable(mode);
    let mut grads: Vec<Dense<T>> = shapes
        .iter()
        .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
        .collect();
    let depth = model.trunk.len();
    let trunk_trainable = mode != Mode::Stage2;
    let scale = T::one() / normalizer(mode, batch);
    let mut loss = T::zero();

    for ex in batch {
        let f = forward(model, mode, ex);
        let (l, mut d_out) = output_loss(mode, ex, &f.out);
        loss = loss + l;
        d_out.iter_mut().for_each(|g| *g = *g * scale);

        let mut d_h = vec![T::zero(); f.trunk[depth].len()];
        match mode {
            Mode::Stage1 | Mode::Words => {
                let head = match mode {
                    Mode::Stage1 => &model.head1,
                    _ => &model.word_head.as_ref().expect("word head present").layer,
                };
                let mut d_fusion = vec![T::zero(); f.fusion_out.len()];
                accumulate(head, &mut grads[depth + 1], &f.fusion_out, &d_out, Some(&mut d_fusion));
                mask_relu(&mut d_fusion, &f.fusion_out);
                let mut d_u = vec![T::zero(); f.fusion_in.len()];
                accumulate(&model.fusion, &mut grads[depth], &f.fusion_in, &d_fusion, Some(&mut d_u));
                let n = d_h.len();
                d_h.copy_from_slice(&d_u[..n]);
            }
            Mode::Stage2 | Mode::ImageOnly => {
                let head = model.head2.as_ref().expect("stage-2 head present");
                let slot = if trunk_trainable { depth } else { 0 };
                let want_input = trunk_trainable.then_some(d_h.as_mut_slice());
                accumulate(head, &mut grads[slot], &f.trunk[depth], &d_out, want_input);
            }
        }

        if trunk_trainable {
            for l in (0..depth).rev() {
                mask_relu(&mut d_h, &f.trunk[l + 1]);
                let mut d_prev = vec![T::zero(); f.trunk[l].len()];
                let need_prev = l > 0;
                accumulate(
                    &model.trunk[l],
                    &mut grads[l],
                    &f.trunk[l],
                    &d_h,
                    need_prev.then_some(d_prev.as_mut_slice()),
                );
                d_h = d_prev;
            }
        }
    }
    (loss * scale, grads)
}
