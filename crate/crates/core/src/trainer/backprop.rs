//! Loss and analytic gradients for the heads and, optionally, the fusion
//! stack.

use super::{Example, TrainError};
use crate::fusion::{fuse_case_traced, AffineMap, FusionOptions, FusionWeights, EMBED_DIM};
use crate::numeric::log_sum_exp;
use crate::reasoning::{head_input, HierarchyModel, LEVELS};

/// Gradient buffers shaped like an [`AffineMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MapGrad {
    pub fn zeros_like(m: &AffineMap) -> Self {
        MapGrad {
            weights: vec![0.0; m.weights().len()],
            bias: vec![0.0; m.bias().len()],
        }
    }

    /// `W += g ⊗ x`, `b += g`, skipping zero entries of `x` and `g`.
    fn accumulate(&mut self, g: &[f64], x: &[f64], nonzero: &[usize]) {
        let cols = x.len();
        for (r, &gr) in g.iter().enumerate() {
            if gr == 0.0 {
                continue;
            }
            self.bias[r] += gr;
            let row = &mut self.weights[r * cols..(r + 1) * cols];
            for &j in nonzero {
                row[j] += gr * x[j];
            }
        }
    }

    pub fn apply(&self, m: &mut AffineMap, lr: f64) {
        for (w, g) in m.weights_mut().iter_mut().zip(&self.weights) {
            *w -= lr * g;
        }
        for (b, g) in m.bias_mut().iter_mut().zip(&self.bias) {
            *b -= lr * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub heads: Vec<MapGrad>,
    /// Same order as [`FusionWeights::maps`].
    pub fusion: Option<Vec<MapGrad>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    /// Level-weighted mean cross-entropy.
    pub total: f64,
    /// Unweighted mean cross-entropy per level.
    pub per_level: [f64; LEVELS],
    /// Correct argmax predictions per level.
    pub correct: [usize; LEVELS],
}

fn nonzero(x: &[f64]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Mean loss over `batch` and, when `want_grad`, its gradient.
///
/// With `fusion` set the embedding is recomputed from the raw modality
/// inputs and gradients flow into the fusion maps as well.
pub fn loss_and_grad(
    model: &HierarchyModel,
    fusion: Option<&FusionWeights>,
    batch: &[&Example],
    level_weights: &[f64; LEVELS],
    want_grad: bool,
) -> Result<(BatchLoss, Option<Gradients>), TrainError> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut loss = BatchLoss::default();
    let mut grads = want_grad.then(|| Gradients {
        heads: model.heads().iter().map(MapGrad::zeros_like).collect(),
        fusion: fusion.map(|w| w.maps().iter().map(|m| MapGrad::zeros_like(m)).collect()),
    });

    let mut logits = vec![0.0; 118];
    let mut gx = vec![0.0; EMBED_DIM];
    for ex in batch {
        let trace = match fusion {
            Some(w) => {
                let raw = ex.raw.as_ref().ok_or(TrainError::MissingRawInputs)?;
                Some(fuse_case_traced(
                    &raw.image,
                    &raw.text,
                    &raw.glm,
                    w,
                    FusionOptions::default(),
                )?)
            }
            None => None,
        };
        let embedding: &[f64] = match &trace {
            Some(t) => &t.output,
            None => &ex.embedding,
        };
        let x = head_input(embedding);
        let x_nz = nonzero(&x);
        gx.iter_mut().for_each(|v| *v = 0.0);

        for (l, head) in model.heads().iter().enumerate() {
            let out = &mut logits[..head.out_dim()];
            head.apply_into(&x, out);
            let y = ex.labels[l];
            let lse = log_sum_exp(out);
            let ce = lse - out[y];
            loss.per_level[l] += ce * scale;
            loss.total += level_weights[l] * ce * scale;
            if crate::numeric::argmax(out) == y {
                loss.correct[l] += 1;
            }
            if let Some(g) = grads.as_mut() {
                let w = level_weights[l] * scale;
                if w == 0.0 {
                    continue;
                }
                // d CE / d logits = softmax - onehot
                for (k, v) in out.iter_mut().enumerate() {
                    *v = w * ((*v - lse).exp() - if k == y { 1.0 } else { 0.0 });
                }
                g.heads[l].accumulate(out, &x, &x_nz);
                if fusion.is_some() {
                    let mut back = vec![0.0; EMBED_DIM];
                    head.transpose_apply_into(out, &mut back);
                    gx.iter_mut().zip(&back).for_each(|(a, b)| *a += b);
                }
            }
        }

        if let (Some(g), Some(t), Some(w)) = (grads.as_mut(), &trace, fusion) {
            let fg = g.fusion.as_mut().expect("fusion gradients allocated");
            backprop_fusion(w, t, embedding, &x, &gx, fg);
        }
    }
    if !loss.total.is_finite() {
        return Err(TrainError::NonFiniteLoss);
    }
    Ok((loss, grads))
}

/// Pushes the head-input gradient `gx` back through the normalisation and
/// the five fusion maps.
fn backprop_fusion(
    w: &FusionWeights,
    t: &crate::fusion::FusionTrace,
    embedding: &[f64],
    x: &[f64],
    gx: &[f64],
    fg: &mut [MapGrad],
) {
    let n = embedding.len() as f64;
    let ms = embedding.iter().map(|v| v * v).sum::<f64>() / n;
    let ge: Vec<f64> = if ms == 0.0 {
        gx.to_vec()
    } else {
        // x = e / r with r = rms(e): de = (gx - x (x . gx) / n) / r
        let r = ms.sqrt();
        let xg: f64 = x.iter().zip(gx).map(|(a, b)| a * b).sum();
        x.iter().zip(gx).map(|(xi, gi)| (gi - xi * xg / n) / r).collect()
    };

    // Map order: image_proj, text_proj, glm_proj, clip_fusion, multimodal_fusion.
    fg[4].accumulate(&ge, &t.mm_in, &nonzero(&t.mm_in));
    let mut g_mm_in = vec![0.0; 2 * EMBED_DIM];
    w.multimodal_fusion.transpose_apply_into(&ge, &mut g_mm_in);
    let (g_cf, g_gp) = g_mm_in.split_at(EMBED_DIM);

    fg[2].accumulate(g_gp, &t.glm, &nonzero(&t.glm));
    fg[3].accumulate(g_cf, &t.clip_in, &nonzero(&t.clip_in));
    let mut g_clip_in = vec![0.0; 2 * EMBED_DIM];
    w.clip_fusion.transpose_apply_into(g_cf, &mut g_clip_in);
    let (g_ip, g_tp) = g_clip_in.split_at(EMBED_DIM);
    fg[0].accumulate(g_ip, &t.image, &nonzero(&t.image));
    fg[1].accumulate(g_tp, &t.text, &nonzero(&t.text));
}
