use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{loss_and_grad, MapGrad};
use super::{Example, TrainError};
use crate::fusion::{AffineMap, FusionWeights};
use crate::reasoning::{HierarchyModel, LEVELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(map, parameter index, analytic, numeric)` of the worst sample.
    pub worst: Option<(String, usize, f64, f64)>,
}

fn entry(m: &mut AffineMap, i: usize) -> &mut f64 {
    let nw = m.weights().len();
    if i < nw {
        &mut m.weights_mut()[i]
    } else {
        &mut m.bias_mut()[i - nw]
    }
}

fn grad_entry(g: &MapGrad, i: usize) -> f64 {
    if i < g.weights.len() {
        g.weights[i]
    } else {
        g.bias[i - g.weights.len()]
    }
}

/// Compares analytic gradients of the mean batch loss with central
/// differences on `samples` randomly chosen parameters.
///
/// The relative error of one parameter is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check(
    model: &HierarchyModel,
    fusion: Option<&FusionWeights>,
    batch: &[Example],
    level_weights: &[f64; LEVELS],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty);
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(TrainError::Config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let refs: Vec<&Example> = batch.iter().collect();
    let (_, grads) = loss_and_grad(model, fusion, &refs, level_weights, true)?;
    let grads = grads.expect("gradients requested");

    let mut heads = model.clone();
    let mut fw = fusion.cloned();
    let n_maps = LEVELS + if fw.is_some() { 5 } else { 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };

    for _ in 0..samples {
        let map = rng.random_range(0..n_maps);
        let (name, count, analytic) = if map < LEVELS {
            let m = heads.head(map as u8 + 1);
            let i = rng.random_range(0..m.param_count());
            (format!("level{}", map + 1), i, grad_entry(&grads.heads[map], i))
        } else {
            let k = map - LEVELS;
            let m = fw.as_ref().unwrap().maps()[k];
            let i = rng.random_range(0..m.param_count());
            let g = &grads.fusion.as_ref().expect("fusion gradients")[k];
            (crate::fusion::FUSION_LAYOUT[k].0.to_string(), i, grad_entry(g, i))
        };

        let mut loss_at = |delta: f64| -> Result<f64, TrainError> {
            let original;
            {
                let target = if map < LEVELS {
                    entry(heads.head_mut(map as u8 + 1), count)
                } else {
                    entry(fw.as_mut().unwrap().maps_mut()[map - LEVELS], count)
                };
                original = *target;
                *target = original + delta;
            }
            let (l, _) = loss_and_grad(&heads, fw.as_ref(), &refs, level_weights, false)?;
            let target = if map < LEVELS {
                entry(heads.head_mut(map as u8 + 1), count)
            } else {
                entry(fw.as_mut().unwrap().maps_mut()[map - LEVELS], count)
            };
            *target = original;
            Ok(l.total)
        };
        let numeric = (loss_at(epsilon)? - loss_at(-epsilon)?) / (2.0 * epsilon);
        let denom = analytic.abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel >= report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((name, count, analytic, numeric));
        }
    }
    Ok(report)
}
