//! Everything needed to diagnose, owned in one place and stored as a model
//! directory.
//!
//! A model directory holds `engine.toml`, `fusion.odxw`, `heads.odxw` and,
//! optionally, `taxonomy.toml` (the bundled taxonomy otherwise) and
//! `atlas.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datapipe::SynthParams;
use crate::evaluation::{export_atlas, run_experiment, AtlasExport, EvalError, ExperimentConfig};
use crate::fusion::{
    embed_case, load_bundle, save_bundle, BundleError, CollapsedFusion, FusionWeights, HashBackend,
};
use crate::reasoning::{
    run_fast, CertaintyBands, Context, Diagnosis, GatingConfig, HierarchyModel, ReasoningError,
};
use crate::taxonomy::{Taxonomy, TaxonomyError};
use crate::trainer::TrainConfig;

pub const ENGINE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("engine.toml: {0}")]
    Config(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Contents of `engine.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub schema_version: u32,
    pub backend_seed: u64,
    pub top_k: usize,
    pub gating: GatingConfig,
    pub bands: CertaintyBands,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            schema_version: ENGINE_SCHEMA_VERSION,
            backend_seed: 0,
            top_k: 3,
            gating: GatingConfig::default(),
            bands: CertaintyBands::default(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.schema_version != ENGINE_SCHEMA_VERSION {
            return Err(EngineError::Config(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.top_k == 0 {
            return Err(EngineError::Config("top_k must be at least 1".into()));
        }
        self.gating.validate()?;
        Ok(())
    }
}

pub struct Engine {
    pub taxonomy: Taxonomy,
    pub fusion: FusionWeights,
    pub model: HierarchyModel,
    pub config: EngineConfig,
    pub atlas: Option<AtlasExport>,
    backend: HashBackend,
    fuser: CollapsedFusion,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl Engine {
    pub fn new(
        taxonomy: Taxonomy,
        fusion: FusionWeights,
        model: HierarchyModel,
        config: EngineConfig,
        atlas: Option<AtlasExport>,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let fuser = CollapsedFusion::new(&fusion);
        Ok(Engine {
            backend: HashBackend::new(config.backend_seed),
            taxonomy,
            fusion,
            model,
            config,
            atlas,
            fuser,
        })
    }

    pub fn context(&self) -> Context<'_> {
        Context {
            taxonomy: &self.taxonomy,
            model: &self.model,
            backend: &self.backend,
            fuser: &self.fuser,
            gating: &self.config.gating,
            bands: self.config.bands,
        }
    }

    pub fn fuser(&self) -> &CollapsedFusion {
        &self.fuser
    }

    pub fn backend(&self) -> &HashBackend {
        &self.backend
    }

    /// Single-pass diagnosis of a case.
    pub fn fast(&self, case_text: &str, image_features: &[f64]) -> Result<Diagnosis, ReasoningError> {
        if case_text.trim().is_empty() {
            return Err(ReasoningError::EmptyCaseText);
        }
        let embedding = embed_case(&self.backend, &self.fuser, case_text, image_features)?;
        run_fast(
            &self.model,
            embedding.as_slice(),
            &self.taxonomy,
            self.config.top_k,
            &self.config.bands,
        )
    }

    /// Trains heads on a synthetic corpus and builds the atlas from its
    /// train and test cases.
    pub fn synthetic(
        corpus_seed: u64,
        synth: SynthParams,
        train: TrainConfig,
        config: EngineConfig,
    ) -> Result<Self, EngineError> {
        let taxonomy = Taxonomy::bundled();
        let fusion = FusionWeights::seeded(corpus_seed);
        let fuser = CollapsedFusion::new(&fusion);
        let experiment = ExperimentConfig {
            corpus_seed,
            synth,
            train,
            backend_seed: config.backend_seed,
            gating: config.gating.clone(),
            bands: config.bands,
            top_k: config.top_k,
            standard: false,
        };
        let result = run_experiment(&taxonomy, &fusion, &fuser, &experiment)?;
        let atlas = export_atlas(&taxonomy, &result.mean_embeddings, &result.mean_confidence)?;
        config.validate()?;
        Ok(Engine {
            backend: HashBackend::new(config.backend_seed),
            taxonomy,
            fusion,
            model: result.model,
            config,
            atlas: Some(atlas),
            fuser,
        })
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, EngineError> {
        let dir = dir.as_ref();
        let cfg_path = dir.join("engine.toml");
        let text = fs::read_to_string(&cfg_path).map_err(|e| io_err(&cfg_path, e))?;
        let config: EngineConfig = toml::from_str(&text).map_err(|e| EngineError::Config(e.to_string()))?;
        let tax_path = dir.join("taxonomy.toml");
        let taxonomy = if tax_path.exists() {
            Taxonomy::load(&tax_path)?
        } else {
            Taxonomy::bundled()
        };
        let fusion: FusionWeights = load_bundle(dir.join("fusion.odxw"))?;
        let model: HierarchyModel = load_bundle(dir.join("heads.odxw"))?;
        let atlas_path = dir.join("atlas.json");
        let atlas = if atlas_path.exists() {
            let text = fs::read_to_string(&atlas_path).map_err(|e| io_err(&atlas_path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| io_err(&atlas_path, e))?)
        } else {
            None
        };
        Engine::new(taxonomy, fusion, model, config, atlas)
    }

    /// Writes the model directory; the taxonomy file is omitted.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), EngineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let cfg_path = dir.join("engine.toml");
        let text = toml::to_string(&self.config).map_err(|e| EngineError::Config(e.to_string()))?;
        fs::write(&cfg_path, text).map_err(|e| io_err(&cfg_path, e))?;
        save_bundle(&self.fusion, dir.join("fusion.odxw"))?;
        save_bundle(&self.model, dir.join("heads.odxw"))?;
        if let Some(atlas) = &self.atlas {
            let path = dir.join("atlas.json");
            let text = serde_json::to_string_pretty(atlas).expect("atlas serialises");
            fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }
}
