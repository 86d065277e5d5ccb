//! Train on a synthetic corpus and evaluate both modes on its test split.

use std::collections::BTreeMap;
use std::path::Path;

use super::zones::{zone_report, PredictionEntry, PredictionLog, ZoneReport};
use super::EvalError;
use crate::datapipe::{generate_synthetic_corpus, Split, SynthParams, SyntheticCorpus};
use crate::fusion::{CaseFuser, FusionWeights, HashBackend};
use crate::reasoning::{
    run_fast, run_standard, CertaintyBands, ClarificationRequest, Context, GatingConfig, HierarchyModel,
    SessionState,
};
use crate::taxonomy::{DiseaseId, Taxonomy};
use crate::trainer::{build_examples, train_heads, LossReport, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub corpus_seed: u64,
    pub synth: SynthParams,
    pub train: TrainConfig,
    pub backend_seed: u64,
    pub gating: GatingConfig,
    pub bands: CertaintyBands,
    pub top_k: usize,
    /// Run Standard Mode with oracle answers as well as Fast Mode.
    pub standard: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus_seed: 0,
            synth: SynthParams::default(),
            train: TrainConfig::default(),
            backend_seed: 0,
            gating: GatingConfig::default(),
            bands: CertaintyBands::default(),
            top_k: 3,
            standard: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub corpus: SyntheticCorpus,
    pub model: HierarchyModel,
    pub training: LossReport,
    pub log: PredictionLog,
    pub report: ZoneReport,
    /// Mean embedding per disease over the train and test splits.
    pub mean_embeddings: BTreeMap<DiseaseId, Vec<f64>>,
    /// Mean Fast Mode top-1 confidence per disease over the same cases,
    /// in `[0, 1]`.
    pub mean_confidence: BTreeMap<DiseaseId, f64>,
}

/// Generates a corpus, fits zero-initialised heads on its training split
/// and evaluates its test split.
///
/// `fusion` must be the weights `fuser` was built from; they are held fixed.
pub fn run_experiment(
    taxonomy: &Taxonomy,
    fusion: &FusionWeights,
    fuser: &dyn CaseFuser,
    config: &ExperimentConfig,
) -> Result<ExperimentResult, EvalError> {
    let corpus = generate_synthetic_corpus(taxonomy, config.corpus_seed, &config.synth)?;
    let backend = HashBackend::new(config.backend_seed);
    let base = Path::new(".");
    let train = build_examples(
        &corpus.manifest,
        Split::Train,
        base,
        taxonomy,
        &backend,
        fuser,
        false,
    )?;
    let mut train_cfg = config.train.clone();
    train_cfg.train_fusion = false;
    let trained = train_heads(&HierarchyModel::zeros(), fusion, &train, &train_cfg)?;
    let model = trained.model;

    let test = build_examples(
        &corpus.manifest,
        Split::Test,
        base,
        taxonomy,
        &backend,
        fuser,
        false,
    )?;
    let ctx = Context {
        taxonomy,
        model: &model,
        backend: &backend,
        fuser,
        gating: &config.gating,
        bands: config.bands,
    };

    let mut sums: BTreeMap<DiseaseId, (Vec<f64>, f64, usize)> = BTreeMap::new();
    for ex in train.iter().chain(&test) {
        let fast = run_fast(&model, &ex.embedding, taxonomy, 1, &config.bands)?;
        let s = sums
            .entry(ex.disease)
            .or_insert_with(|| (vec![0.0; ex.embedding.len()], 0.0, 0));
        s.0.iter_mut().zip(&ex.embedding).for_each(|(a, b)| *a += b);
        s.1 += fast.confidence() / 100.0;
        s.2 += 1;
    }

    let mut log = PredictionLog::default();
    for (ex, entry) in test.iter().zip(corpus.manifest.in_split(Split::Test)) {
        let fast = run_fast(&model, &ex.embedding, taxonomy, config.top_k, &config.bands)?;

        let (standard, clarifications, path) = if config.standard {
            let features = entry.image_features.as_deref().unwrap_or_default();
            let mut session =
                SessionState::start_with_id(&ctx, ex.case_id.clone(), &entry.case_text, features)?;
            let answer = corpus.oracle_answer(taxonomy, ex.disease);
            let mut responder = |_: &ClarificationRequest| Some(answer.clone());
            let run = run_standard(&ctx, &mut session, &mut responder, config.top_k)?;
            let predicted = match &run.finding {
                crate::reasoning::Finding::Disease(d) => d.primary.id,
                // Scored as the best disease given everything said so far.
                crate::reasoning::Finding::Normal { .. } => {
                    run_fast(&model, &session.embedding, taxonomy, 1, &config.bands)?
                        .primary
                        .id
                }
            };
            let asked = session.clarifications.iter().sum();
            let path = session.path.0.iter().map(|s| s.display.clone()).collect();
            (Some(predicted), asked, path)
        } else {
            (None, 0, Vec::new())
        };
        log.entries.push(PredictionEntry {
            case_id: ex.case_id.clone(),
            truth: ex.disease,
            zone: entry.zone,
            fast: fast.primary.id,
            standard,
            clarifications,
            path,
        });
    }
    let report = zone_report(&log, taxonomy)?;
    let mut mean_embeddings = BTreeMap::new();
    let mut mean_confidence = BTreeMap::new();
    for (id, (sum, conf, n)) in sums {
        let n = n as f64;
        mean_embeddings.insert(id, sum.into_iter().map(|v| v / n).collect());
        mean_confidence.insert(id, conf / n);
    }
    Ok(ExperimentResult {
        corpus,
        model,
        training: trained.report,
        log,
        report,
        mean_embeddings,
        mean_confidence,
    })
}
