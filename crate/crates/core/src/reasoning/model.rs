use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ReasoningError, LEVELS, LEVEL_ARITY};
use crate::fusion::{AffineMap, BundleError, Bundled, EMBED_DIM};
use crate::numeric::{masked_softmax, softmax};
use crate::taxonomy::{DiseaseId, Taxonomy};

/// Rescales `embedding` to unit root-mean-square; the zero vector is
/// returned unchanged.
///
/// Every head sees this normalised input, so logit scale does not depend on
/// the magnitude the fusion stack happens to produce.
pub fn head_input(embedding: &[f64]) -> Vec<f64> {
    let ms = embedding.iter().map(|v| v * v).sum::<f64>() / embedding.len().max(1) as f64;
    if ms == 0.0 {
        return embedding.to_vec();
    }
    let inv = ms.sqrt().recip();
    embedding.iter().map(|v| v * inv).collect()
}

/// Six linear heads over the normalised fused embedding, one per
/// reasoning level.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyModel {
    heads: Vec<AffineMap>,
}

pub(crate) fn check_level(level: u8) -> Result<usize, ReasoningError> {
    if (1..=LEVELS as u8).contains(&level) {
        Ok(level as usize)
    } else {
        Err(ReasoningError::LevelOutOfRange(level))
    }
}

impl HierarchyModel {
    pub fn new(heads: Vec<AffineMap>) -> Result<Self, ReasoningError> {
        if heads.len() != LEVELS {
            return Err(ReasoningError::HeadShape(format!(
                "expected {LEVELS} heads, got {}",
                heads.len()
            )));
        }
        for (i, h) in heads.iter().enumerate() {
            if h.in_dim() != EMBED_DIM || h.out_dim() != LEVEL_ARITY[i] {
                return Err(ReasoningError::HeadShape(format!(
                    "level {} head is {}->{}, expected {}->{}",
                    i + 1,
                    h.in_dim(),
                    h.out_dim(),
                    EMBED_DIM,
                    LEVEL_ARITY[i]
                )));
            }
        }
        Ok(HierarchyModel { heads })
    }

    pub fn zeros() -> Self {
        HierarchyModel {
            heads: LEVEL_ARITY
                .iter()
                .map(|&o| AffineMap::zeros(EMBED_DIM, o))
                .collect(),
        }
    }

    /// Uniform weights on `[-scale/32, scale/32]` (1/sqrt(1024) = 1/32), zero bias.
    pub fn seeded(seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HierarchyModel {
            heads: LEVEL_ARITY
                .iter()
                .map(|&o| AffineMap::uniform(EMBED_DIM, o, scale, &mut rng))
                .collect(),
        }
    }

    pub fn head(&self, level: u8) -> &AffineMap {
        &self.heads[level as usize - 1]
    }

    pub fn head_mut(&mut self, level: u8) -> &mut AffineMap {
        &mut self.heads[level as usize - 1]
    }

    pub fn heads(&self) -> &[AffineMap] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [AffineMap] {
        &mut self.heads
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(|h| h.param_count()).sum()
    }

    pub fn logits(&self, level: u8, embedding: &[f64]) -> Result<Vec<f64>, ReasoningError> {
        let l = check_level(level)?;
        if embedding.len() != EMBED_DIM {
            return Err(ReasoningError::EmbeddingDim {
                expected: EMBED_DIM,
                found: embedding.len(),
            });
        }
        let head = &self.heads[l - 1];
        let mut out = vec![0.0; head.out_dim()];
        head.apply_into(&head_input(embedding), &mut out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(ReasoningError::InvalidDistribution(format!(
                "level {level} logits are not finite"
            )));
        }
        Ok(out)
    }
}

impl Bundled for HierarchyModel {
    const KIND: u32 = 2;

    fn layout() -> Vec<(String, usize, usize)> {
        LEVEL_ARITY
            .iter()
            .enumerate()
            .map(|(i, &o)| (format!("level{}", i + 1), EMBED_DIM, o))
            .collect()
    }

    fn to_maps(&self) -> Vec<(String, &AffineMap)> {
        self.heads
            .iter()
            .enumerate()
            .map(|(i, h)| (format!("level{}", i + 1), h))
            .collect()
    }

    fn from_maps(maps: Vec<AffineMap>) -> Result<Self, BundleError> {
        HierarchyModel::new(maps).map_err(|e| BundleError::Invalid(e.to_string()))
    }
}

/// Which outputs of `level` are consistent with `candidates`.
///
/// Level 1 is never masked. A level 2-4 label survives when at least one
/// candidate carries it; a level 5-6 output survives when its disease is a
/// candidate.
pub fn level_mask(level: u8, candidates: &BTreeSet<DiseaseId>, taxonomy: &Taxonomy) -> Vec<bool> {
    let l = level as usize;
    let arity = LEVEL_ARITY[l - 1];
    match l {
        1 => vec![true; arity],
        2..=4 => (0..arity)
            .map(|label| candidates.iter().any(|&id| taxonomy.carries(id, l, label)))
            .collect(),
        _ => {
            let mut mask = vec![false; arity];
            for id in candidates {
                if id.index() < arity {
                    mask[id.index()] = true;
                }
            }
            mask
        }
    }
}

/// Probability distribution of `level` for `embedding`, masked to the
/// candidate set and renormalised.
pub fn level_distribution(
    model: &HierarchyModel,
    embedding: &[f64],
    level: u8,
    candidates: &BTreeSet<DiseaseId>,
    taxonomy: &Taxonomy,
) -> Result<Vec<f64>, ReasoningError> {
    check_level(level)?;
    let logits = model.logits(level, embedding)?;
    if level == 1 {
        return Ok(softmax(&logits));
    }
    if candidates.is_empty() {
        return Err(ReasoningError::EmptyCandidates { level });
    }
    let mask = level_mask(level, candidates, taxonomy);
    masked_softmax(&logits, &mask).ok_or(ReasoningError::EmptyCandidates { level })
}

/// Final 118 probabilities: the level-5 and level-6 masked distributions
/// multiplied element-wise and renormalised.
///
/// Computed as a masked softmax over the summed logits, which is the same
/// quantity without underflow.
pub fn confirmation_distribution(
    model: &HierarchyModel,
    embedding: &[f64],
    candidates: &BTreeSet<DiseaseId>,
    taxonomy: &Taxonomy,
) -> Result<Vec<f64>, ReasoningError> {
    if candidates.is_empty() {
        return Err(ReasoningError::EmptyCandidates { level: 6 });
    }
    let l5 = model.logits(5, embedding)?;
    let l6 = model.logits(6, embedding)?;
    let summed: Vec<f64> = l5.iter().zip(&l6).map(|(a, b)| a + b).collect();
    let mask = level_mask(6, candidates, taxonomy);
    masked_softmax(&summed, &mask).ok_or(ReasoningError::EmptyCandidates { level: 6 })
}
