use std::fmt;

use serde::{Deserialize, Serialize};

use super::model::HierarchyModel;
use super::ReasoningError;
use crate::fusion::EMBED_DIM;
use crate::numeric::{ranked, softmax};
use crate::taxonomy::{DiseaseId, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certainty {
    High,
    Moderate,
    Low,
}

impl fmt::Display for Certainty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Certainty::High => "high",
            Certainty::Moderate => "moderate",
            Certainty::Low => "low",
        })
    }
}

/// Confidence cut-offs in percent: `>= high` is high, `>= moderate` is
/// moderate, anything lower is low.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyBands {
    pub high: f64,
    pub moderate: f64,
}

impl Default for CertaintyBands {
    fn default() -> Self {
        CertaintyBands {
            high: 70.0,
            moderate: 40.0,
        }
    }
}

impl CertaintyBands {
    pub fn classify(&self, percent: f64) -> Certainty {
        if percent >= self.high {
            Certainty::High
        } else if percent >= self.moderate {
            Certainty::Moderate
        } else {
            Certainty::Low
        }
    }
}

/// One disease with its probability expressed in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: DiseaseId,
    pub name: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub level: u8,
    pub key: String,
    pub display: String,
}

/// Labels chosen at levels 1-5.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticPath(pub Vec<PathStep>);

impl DiagnosticPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn steps(&self) -> &[PathStep] {
        &self.0
    }
}

impl fmt::Display for DiagnosticPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" → ")?;
            }
            f.write_str(&s.display)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub primary: Ranked,
    pub certainty: Certainty,
    /// Runner-up diseases in descending order, zero-probability entries omitted.
    pub differential: Vec<Ranked>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<DiagnosticPath>,
}

impl Diagnosis {
    pub fn confidence(&self) -> f64 {
        self.primary.percent
    }
}

/// Builds a diagnosis from a 118-way distribution: the argmax plus up to
/// `top_k - 1` runners-up.
pub fn diagnosis_from_distribution(
    dist: &[f64],
    taxonomy: &Taxonomy,
    top_k: usize,
    bands: &CertaintyBands,
    path: Option<DiagnosticPath>,
) -> Result<Diagnosis, ReasoningError> {
    if top_k == 0 {
        return Err(ReasoningError::ZeroTopK);
    }
    let order = ranked(dist);
    let entry = |i: usize| -> Ranked {
        let id = DiseaseId::from_index(i);
        Ranked {
            id,
            name: taxonomy.get(id).map(|d| d.name.clone()).unwrap_or_default(),
            percent: dist[i] * 100.0,
        }
    };
    let primary = entry(order[0]);
    let differential = order
        .iter()
        .skip(1)
        .take(top_k - 1)
        .filter(|&&i| dist[i] > 0.0)
        .map(|&i| entry(i))
        .collect();
    Ok(Diagnosis {
        certainty: bands.classify(primary.percent),
        primary,
        differential,
        path,
    })
}

/// Single-pass screening: unmasked softmax of the disease head.
pub fn run_fast(
    model: &HierarchyModel,
    embedding: &[f64],
    taxonomy: &Taxonomy,
    top_k: usize,
    bands: &CertaintyBands,
) -> Result<Diagnosis, ReasoningError> {
    if embedding.len() != EMBED_DIM {
        return Err(ReasoningError::EmbeddingDim {
            expected: EMBED_DIM,
            found: embedding.len(),
        });
    }
    let logits = model.logits(5, embedding)?;
    diagnosis_from_distribution(&softmax(&logits), taxonomy, top_k, bands, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bands() {
        let b = CertaintyBands::default();
        assert_eq!(b.classify(85.3), Certainty::High);
        assert_eq!(b.classify(70.0), Certainty::High);
        assert_eq!(b.classify(55.0), Certainty::Moderate);
        assert_eq!(b.classify(39.9), Certainty::Low);
    }

    #[test]
    fn one_hot_fast_mode() {
        let t = Taxonomy::bundled();
        let mut m = HierarchyModel::zeros();
        m.head_mut(5).bias_mut()[55] = 100.0;
        let d = run_fast(&m, &vec![0.0; EMBED_DIM], &t, 3, &CertaintyBands::default()).unwrap();
        assert_eq!(d.primary.id, DiseaseId(56));
        assert!(d.primary.percent > 99.999);
        assert!(d.differential.iter().all(|r| r.percent < 1e-9));
        assert!(d.path.is_none());
    }

    #[test]
    fn top_k_one_is_primary_only() {
        let t = Taxonomy::bundled();
        let m = HierarchyModel::seeded(3, 1.0);
        let d = run_fast(&m, &vec![0.1; EMBED_DIM], &t, 1, &CertaintyBands::default()).unwrap();
        assert!(d.differential.is_empty());
        assert!(run_fast(&m, &vec![0.1; EMBED_DIM], &t, 0, &CertaintyBands::default()).is_err());
    }

    #[test]
    fn path_renders_with_arrows() {
        let p = DiagnosticPath(
            ["Abnormal", "White Lesion", "Adult"]
                .iter()
                .enumerate()
                .map(|(i, d)| PathStep {
                    level: i as u8 + 1,
                    key: d.to_lowercase(),
                    display: d.to_string(),
                })
                .collect(),
        );
        assert_eq!(p.to_string(), "Abnormal → White Lesion → Adult");
    }
}
