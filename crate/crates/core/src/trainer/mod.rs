//! Mini-batch gradient descent on the level heads, with an optional
//! unfrozen fusion stack, and a finite-difference gradient check.

mod backprop;
mod gradcheck;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::{Manifest, Split};
use crate::fusion::{tokenize, CaseFuser, EncoderBackend, FusionError, FusionWeights, Vector};
use crate::reasoning::{HierarchyModel, LEVELS};
use crate::taxonomy::{DiseaseId, Taxonomy, TaxonomyError, ABNORMAL};

pub use backprop::{loss_and_grad, BatchLoss, Gradients, MapGrad};
pub use gradcheck::{grad_check, GradCheckReport};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no training examples")]
    Empty,
    #[error("loss became non-finite")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, report: Box<LossReport> },
    #[error("fusion training needs raw modality inputs on every example")]
    MissingRawInputs,
    #[error("case `{case_id}`: {message}")]
    Case { case_id: String, message: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub level_weights: [f64; LEVELS],
    /// Also update the five fusion maps.
    #[serde(default)]
    pub train_fusion: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            level_weights: [1.0; LEVELS],
            train_fusion: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.level_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(TrainError::Config(
                "level_weights must be non-negative and finite".into(),
            ));
        }
        Ok(())
    }
}

/// Modality inputs kept for fusion training.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInputs {
    pub image: Vector,
    pub text: Vector,
    pub glm: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub case_id: String,
    pub disease: DiseaseId,
    /// Fused embedding under the weights the examples were built with.
    pub embedding: Vec<f64>,
    pub labels: [usize; LEVELS],
    pub raw: Option<RawInputs>,
}

/// Supervised target of every level for a case of `disease` described by
/// `case_text`.
///
/// Level 3 is the first of the disease's context tags whose keywords occur
/// in the text, else its first tag, so the target never contradicts the
/// disease's own labels.
pub fn level_labels_for(
    taxonomy: &Taxonomy,
    disease: DiseaseId,
    case_text: &str,
) -> Result<[usize; LEVELS], TrainError> {
    taxonomy.record(disease)?;
    let schema = taxonomy.schema();
    let abnormal = schema.index_of(1, ABNORMAL).ok_or(TaxonomyError::PrimaryLabels)?;
    let tokens: Vec<String> = tokenize(case_text).collect();
    let contexts = taxonomy.context_indices(disease);
    let context = contexts
        .iter()
        .copied()
        .find(|&c| {
            schema.labels(3)[c]
                .keywords
                .iter()
                .any(|k| tokens.iter().any(|t| t == k))
        })
        .unwrap_or(contexts[0]);
    Ok([
        abnormal,
        taxonomy.lesion_index(disease),
        context,
        taxonomy.category_index(disease),
        disease.index(),
        disease.index(),
    ])
}

/// Encodes and fuses every manifest entry in `split`.
pub fn build_examples(
    manifest: &Manifest,
    split: Split,
    base_dir: &Path,
    taxonomy: &Taxonomy,
    backend: &dyn EncoderBackend,
    fuser: &dyn CaseFuser,
    keep_raw: bool,
) -> Result<Vec<Example>, TrainError> {
    let mut out = Vec::new();
    for e in manifest.in_split(split) {
        let features = e.features(base_dir).map_err(|err| TrainError::Case {
            case_id: e.case_id.clone(),
            message: err.to_string(),
        })?;
        let image = backend.encode_image(&features)?;
        let text = backend.encode_text(&e.case_text)?;
        let glm = backend.encode_glm(&e.case_text)?;
        let embedding = fuser.fuse(&image, &text, &glm)?.into_inner();
        out.push(Example {
            case_id: e.case_id.clone(),
            disease: e.disease_id,
            embedding,
            labels: level_labels_for(taxonomy, e.disease_id, &e.case_text)?,
            raw: keep_raw.then_some(RawInputs { image, text, glm }),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub total: f64,
    pub per_level: [f64; LEVELS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Full-set loss before training and after every epoch.
    pub epochs: Vec<EpochLoss>,
    /// Training-set argmax accuracy per level after the last epoch.
    pub final_accuracy: [f64; LEVELS],
}

impl LossReport {
    pub fn initial(&self) -> &EpochLoss {
        &self.epochs[0]
    }

    pub fn last(&self) -> &EpochLoss {
        self.epochs.last().expect("report has the initial entry")
    }

    /// CSV with header `epoch,total,level1,...,level6`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrainError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["epoch".to_string(), "total".to_string()];
        header.extend((1..=LEVELS).map(|l| format!("level{l}")));
        out.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![e.epoch.to_string(), format!("{:.6}", e.total)];
            row.extend(e.per_level.iter().map(|v| format!("{v:.6}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// The parameters being fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: HierarchyModel,
    /// Present when the fusion stack was trained too.
    pub fusion: Option<FusionWeights>,
    pub report: LossReport,
}

fn evaluate(
    model: &HierarchyModel,
    fusion: Option<&FusionWeights>,
    examples: &[Example],
    config: &TrainConfig,
    epoch: usize,
) -> Result<(EpochLoss, [f64; LEVELS]), TrainError> {
    let all: Vec<&Example> = examples.iter().collect();
    let (loss, _) = loss_and_grad(model, fusion, &all, &config.level_weights, false)?;
    let n = examples.len() as f64;
    let mut acc = [0.0; LEVELS];
    for (a, c) in acc.iter_mut().zip(loss.correct) {
        *a = c as f64 / n;
    }
    Ok((
        EpochLoss {
            epoch,
            total: loss.total,
            per_level: loss.per_level,
        },
        acc,
    ))
}

/// Fits `model` (and `fusion` when `config.train_fusion`) to `examples`.
pub fn train_heads(
    model: &HierarchyModel,
    fusion: &FusionWeights,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<Trained, TrainError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut model = model.clone();
    let mut fusion = config.train_fusion.then(|| fusion.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    let (first, _) = evaluate(&model, fusion.as_ref(), examples, config, 0)?;
    let mut report = LossReport {
        epochs: vec![first],
        final_accuracy: [0.0; LEVELS],
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let result = loss_and_grad(&model, fusion.as_ref(), &batch, &config.level_weights, true);
            let grads = match result {
                Ok((_, g)) => g.expect("gradients requested"),
                Err(TrainError::NonFiniteLoss) => {
                    return Err(TrainError::Diverged {
                        epoch,
                        report: Box::new(report),
                    })
                }
                Err(e) => return Err(e),
            };
            for (head, g) in model.heads_mut().iter_mut().zip(&grads.heads) {
                g.apply(head, config.learning_rate);
            }
            if let (Some(w), Some(fg)) = (fusion.as_mut(), &grads.fusion) {
                for (m, g) in w.maps_mut().into_iter().zip(fg) {
                    g.apply(m, config.learning_rate);
                }
            }
        }
        let (loss, acc) = match evaluate(&model, fusion.as_ref(), examples, config, epoch) {
            Ok(v) => v,
            Err(TrainError::NonFiniteLoss) => {
                return Err(TrainError::Diverged {
                    epoch,
                    report: Box::new(report),
                })
            }
            Err(e) => return Err(e),
        };
        report.epochs.push(loss);
        report.final_accuracy = acc;
    }
    Ok(Trained {
        model,
        fusion,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn olp_labels() {
        let t = Taxonomy::bundled();
        let olp = t.by_name("Oral Lichen Planus").unwrap().id;
        let l = level_labels_for(&t, olp, "white reticular striae").unwrap();
        let s = t.schema();
        assert_eq!(l[0], s.index_of(1, "abnormal").unwrap());
        assert_eq!(l[1], s.index_of(2, "white").unwrap());
        assert_eq!(l[2], s.index_of(3, "adult").unwrap());
        assert_eq!(l[3], s.index_of(4, "inflammatory/reactive").unwrap());
        assert_eq!(l[4], olp.index());
        assert_eq!(l[5], olp.index());
    }

    #[test]
    fn context_label_follows_text() {
        let t = Taxonomy::bundled();
        let leuk = t.by_name("Oral Leukoplakia").unwrap().id;
        let s = t.schema();
        let l = level_labels_for(&t, leuk, "heavy smoker").unwrap();
        assert_eq!(l[2], s.index_of(3, "tobacco-exposure").unwrap());
        let l = level_labels_for(&t, leuk, "no history").unwrap();
        assert_eq!(l[2], t.context_indices(leuk)[0]);
    }

    #[test]
    fn labels_stay_in_range() {
        let t = Taxonomy::bundled();
        for d in t.diseases() {
            let l = level_labels_for(&t, d.id, "patient").unwrap();
            for (v, n) in l.iter().zip(crate::reasoning::LEVEL_ARITY) {
                assert!(*v < n);
            }
        }
        assert!(level_labels_for(&t, DiseaseId(119), "x").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
